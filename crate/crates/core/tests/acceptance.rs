//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use incremad_core::data::{synth_sources, Dataset, SourceSet, SynthSourceSpec};
use incremad_core::metrics::{
    apcer, bpcer, bpcer_at_apcer, brot, brot_points, eer, RankingTable, ScoreSet,
};
use incremad_core::nn::{finite_diff_check, Batch, MlpModel, OptimizerState};
use incremad_core::report::{write_grid, Manifest};
use incremad_core::runner::{
    compare_strategies, grid_sweep, rep_seed, Comparison, GridSpec, MetricProfile, RunConfig,
};
use incremad_core::seed;
use incremad_core::strategies::{train_experience, Learner, StrategyConfig, StrategyKind, StrategyState};
use incremad_core::stream::{
    build_stream, candidate_sizes, enumerate_orders, Experience, SizeMode, SizeSchedule,
    ZipfSizeSampler, MIN_CHUNK,
};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn gradient_soundness() -> Outcome {
    let t = Instant::now();
    let mut rng = seed::rng(0x6772_6164);
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let d = rng.random_range(2..=16);
        let h = rng.random_range(1..=8);
        let c = rng.random_range(2..=4);
        let n = rng.random_range(1..=8);
        let model = MlpModel::init(&[d, h, c], rng.random()).map_err(err)?;
        let features = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
        let batch = Batch::from_rows(d, features, labels).map_err(err)?;
        let e = finite_diff_check(&model, &batch, 1e-5).map_err(err)?;
        if !(e < 1e-5) {
            return Err(format!("instance {i} (widths [{d}, {h}, {c}], batch {n}): error {e:.3e}"));
        }
        worst = worst.max(e);
    }
    let secs = t.elapsed().as_secs_f64();
    check(secs < 10.0, format!("50 instances, worst relative error {worst:.2e}, {secs:.2}s"))
}

// ---------------------------------------------------------------- 2, 3

fn five_experiences() -> Result<Vec<Experience>, String> {
    let data = synth_sources(&SynthSourceSpec {
        n_sources: 1,
        samples_per_class: 250,
        seed: 11,
        ..Default::default()
    })
    .map_err(err)?;
    let stream = build_stream(&data.sources, &[0], &SizeSchedule::fixed(100), &data.test, 3)
        .map_err(err)?;
    if stream.len() != 5 {
        return Err(format!("expected 5 experiences, got {}", stream.len()));
    }
    Ok(stream.experiences)
}

fn final_param_bits(cfg: &StrategyConfig, exps: &[Experience]) -> Result<Vec<u64>, String> {
    let model = MlpModel::init(&[16, 32, 16, 2], 5).map_err(err)?;
    let opt = OptimizerState::new(&model, 0.01, 0.9).map_err(err)?;
    let mut learner = Learner::new(cfg, model, opt).map_err(err)?;
    for (i, e) in exps.iter().enumerate() {
        train_experience(&mut learner, e, cfg, 100 + i as u64).map_err(err)?;
    }
    Ok(learner.model.params().iter().map(|v| v.to_bits()).collect())
}

fn collapse(tweaks: &[(&str, StrategyConfig)]) -> Outcome {
    let exps = five_experiences()?;
    let naive = final_param_bits(&StrategyConfig::new(StrategyKind::Naive), &exps)?;
    let mut names = Vec::new();
    for (name, cfg) in tweaks {
        if final_param_bits(cfg, &exps)? != naive {
            return Err(format!("{name} parameters differ from Naive"));
        }
        names.push(*name);
    }
    Ok(format!(
        "{} bit-identical to Naive over 5 experiences ({} parameters)",
        names.join(", "),
        naive.len()
    ))
}

fn lwf_collapse() -> Outcome {
    let cfg = StrategyConfig {
        lambda_lwf: 0.0,
        ..StrategyConfig::new(StrategyKind::Lwf)
    };
    collapse(&[("LwF(λ=0)", cfg)])
}

fn penalty_collapse() -> Outcome {
    let ewc = StrategyConfig {
        lambda_ewc: 0.0,
        ..StrategyConfig::new(StrategyKind::Ewc)
    };
    let si = StrategyConfig {
        si_c: 0.0,
        ..StrategyConfig::new(StrategyKind::Si)
    };
    collapse(&[("EWC(λ=0)", ewc), ("SI(c=0)", si)])
}

// ---------------------------------------------------------------- 4

fn slda_partition_invariance() -> Outcome {
    let data = synth_sources(&SynthSourceSpec {
        n_sources: 1,
        n_classes: 3,
        samples_per_class: 400,
        seed: 21,
        ..Default::default()
    })
    .map_err(err)?;
    let src = &data.sources[0];
    let mut order: Vec<usize> = (0..src.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng(4));
    let cfg = StrategyConfig::new(StrategyKind::Slda);
    let mut states = Vec::new();
    for chunk in [1usize, 50, 500] {
        let model = MlpModel::init(&[src.dim(), 4, 3], 0).map_err(err)?;
        let opt = OptimizerState::new(&model, 0.01, 0.9).map_err(err)?;
        let mut learner = Learner::new(&cfg, model, opt).map_err(err)?;
        for (k, idx) in order.chunks(chunk).enumerate() {
            let exp = Experience {
                index: k + 1,
                source_id: 0,
                data: src.subset(format!("chunk{k}"), idx).map_err(err)?,
            };
            train_experience(&mut learner, &exp, &cfg, k as u64).map_err(err)?;
        }
        match learner.state {
            StrategyState::Slda(s) => states.push((chunk, s)),
            _ => return Err("learner lost its SLDA state".into()),
        }
    }
    let (_, reference) = &states[0];
    for (chunk, s) in &states[1..] {
        let same = s.counts == reference.counts
            && s.total == reference.total
            && bits_eq(&s.means, &reference.means)
            && bits_eq(&s.covariance, &reference.covariance);
        if !same {
            return Err(format!("chunking {chunk} diverges from chunking 1"));
        }
    }
    Ok(format!("{} samples, chunkings 1/50/500 give identical state", src.len()))
}

fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

// ---------------------------------------------------------------- 5

/// Rates at threshold `tau` by direct counting.
fn oracle_rates(s: &ScoreSet, tau: f64) -> (f64, f64) {
    let b = s.bona.iter().filter(|&&v| v > tau).count() as f64 / s.bona.len() as f64;
    let a = s.morph.iter().filter(|&&v| v <= tau).count() as f64 / s.morph.len() as f64;
    (b, a)
}

/// Every distinct (BPCER, APCER) pair in ascending threshold order: rates
/// only change at observed scores, so one threshold below all scores plus
/// each distinct score enumerates them all.
fn oracle_curve(s: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let mut taus: Vec<f64> = s.bona.iter().chain(&s.morph).copied().collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut all = vec![taus[0] - 1.0];
    all.extend(taus);
    all.into_iter()
        .map(|t| {
            let (b, a) = oracle_rates(s, t);
            (t, b, a)
        })
        .collect()
}

fn oracle_eer(s: &ScoreSet) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for (_, b, a) in oracle_curve(s) {
        let gap = (b - a).abs();
        if gap < best.0 {
            best = (gap, (b + a) / 2.0);
        }
    }
    best.1
}

fn oracle_bpcer_at(s: &ScoreSet, x: f64) -> f64 {
    oracle_curve(s)
        .into_iter()
        .filter(|&(_, _, a)| a <= x)
        .map(|(_, b, _)| b)
        .fold(1.0, f64::min)
}

fn random_scores<R: Rng>(rng: &mut R) -> ScoreSet {
    let n = rng.random_range(1..=60);
    let m = rng.random_range(1..=60);
    // coarse grids force ties between and within the two classes
    let coarse = rng.random_bool(0.5);
    let mut draw = |shift: f64| -> f64 {
        if coarse {
            (rng.random_range(0..12) as f64 + shift) / 10.0
        } else {
            rng.random_range(-1.0..1.0) + shift
        }
    };
    let bona = (0..n).map(|_| draw(0.0)).collect();
    let morph = (0..m).map(|_| draw(0.5)).collect();
    ScoreSet::new(bona, morph).expect("finite scores")
}

fn metric_oracles() -> Outcome {
    let mut rng = seed::rng(0x6d65_7472);
    for i in 0..1000 {
        let s = random_scores(&mut rng);
        let got = eer(&s).map_err(err)?;
        let want = oracle_eer(&s);
        if got != want {
            return Err(format!("set {i}: EER {got} vs oracle {want}"));
        }
        for x in [0.1, 0.01, 0.001, 0.25] {
            let got = bpcer_at_apcer(&s, x).map_err(err)?;
            let want = oracle_bpcer_at(&s, x);
            if got != want {
                return Err(format!("set {i}: BPCER@APCER<={x} {got} vs oracle {want}"));
            }
        }
        let curve = oracle_curve(&s);
        let mut taus: Vec<f64> = curve.iter().map(|c| c.0).collect();
        taus.extend((0..20).map(|_| rng.random_range(-1.5..2.0)));
        taus.push(f64::NEG_INFINITY);
        taus.push(f64::INFINITY);
        taus.sort_by(f64::total_cmp);
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in &taus {
            let (b, a) = (bpcer(&s, t).map_err(err)?, apcer(&s, t).map_err(err)?);
            if (b, a) != oracle_rates(&s, t) {
                return Err(format!("set {i}: rates at {t} disagree with counting"));
            }
            if b > prev.0 || a < prev.1 {
                return Err(format!("set {i}: rates not monotone at {t}"));
            }
            prev = (b, a);
        }
    }
    Ok("1000 score sets match the enumeration oracle, rates monotone in τ".into())
}

// ---------------------------------------------------------------- 6

fn brot_algebra() -> Outcome {
    let mut rng = seed::rng(0x6272_6f74);
    for i in 0..100 {
        let a = rng.random_range(2..=6usize);
        let n = rng.random_range(1..=20usize);
        let mut values: Vec<Vec<f64>> = (0..a)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let names: Vec<String> = (0..a).map(|k| format!("a{k}")).collect();
        let lower = rng.random_bool(0.5);
        let table = RankingTable::new(names.clone(), values.clone()).map_err(err)?;
        let points: u64 = brot_points(&table, lower).map_err(err)?.iter().sum();
        let sum: f64 = brot(&table, lower).map_err(err)?.iter().sum();
        let want = (a as f64 - 1.0) / 2.0;
        if points != (n * a * (a - 1) / 2) as u64 || (sum - want).abs() > 1e-12 {
            return Err(format!("table {i} (|A|={a}, N={n}): sum {sum}, expected {want}"));
        }

        // make one algorithm strictly best at every experience
        let star = rng.random_range(0..a);
        for t in 0..n {
            let col = (0..a).filter(|&k| k != star).map(|k| values[k][t]);
            values[star][t] = if lower {
                col.fold(f64::INFINITY, f64::min) - 1.0
            } else {
                col.fold(f64::NEG_INFINITY, f64::max) + 1.0
            };
        }
        let table = RankingTable::new(names, values).map_err(err)?;
        let pts = brot_points(&table, lower).map_err(err)?;
        let b = brot(&table, lower).map_err(err)?;
        let top = (a as f64 - 1.0) / a as f64;
        if pts[star] != ((a - 1) * n) as u64 || (b[star] - top).abs() > 1e-15 {
            return Err(format!("table {i}: best algorithm scores {}, expected {top}", b[star]));
        }
    }
    Ok("100 tables: Σ BRoT = (|A|-1)/2, best algorithm attains (|A|-1)/|A|".into())
}

// ---------------------------------------------------------------- 7

fn zipf_schedule() -> Outcome {
    const DRAWS: usize = 1_000_000;
    let h10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
    let small = ZipfSizeSampler::new(&SizeSchedule::zipf_small()).map_err(err)?;
    let large = ZipfSizeSampler::new(&SizeSchedule::zipf_large()).map_err(err)?;
    let sizes = candidate_sizes();
    let histogram = |s: &ZipfSizeSampler, key: u64| -> (f64, Vec<f64>) {
        let mut rng = seed::rng(key);
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rank1 = 0usize;
        for _ in 0..DRAWS {
            let r = s.sample_rank(&mut rng);
            rank1 += (r == 1) as usize;
            *counts.entry(s.size_of_rank(r)).or_default() += 1;
        }
        let freq = sizes
            .iter()
            .map(|z| *counts.get(z).unwrap_or(&0) as f64 / DRAWS as f64)
            .collect();
        (rank1 as f64 / DRAWS as f64, freq)
    };
    let (p_small, h_small) = histogram(&small, 1);
    let (p_large, h_large) = histogram(&large, 2);
    let target = 1.0 / h10;
    let mirror = h_small
        .iter()
        .zip(h_large.iter().rev())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "P(rank 1) {p_small:.4} / {p_large:.4} vs {target:.4}, mirror discrepancy {mirror:.4}"
    );
    check(
        (p_small - target).abs() <= 0.003 && (p_large - target).abs() <= 0.003 && mirror < 0.005,
        detail,
    )
}

// ---------------------------------------------------------------- 8, 9

/// Synthetic drift stream shared by the ordering criteria.
fn drift_sources(n_classes: usize, data_seed: u64) -> Result<SourceSet, String> {
    let spec = if n_classes == 2 {
        SynthSourceSpec {
            shift: 2.0,
            class_separation: 2.0,
            samples_per_class: 250,
            test_samples_per_class: 2000,
            seed: data_seed,
            ..Default::default()
        }
    } else {
        SynthSourceSpec {
            n_classes,
            shift: 2.0,
            class_separation: 3.0,
            samples_per_class: 100,
            test_samples_per_class: 500,
            seed: data_seed,
            ..Default::default()
        }
    };
    synth_sources(&spec).map_err(err)
}

fn base_config(profile: MetricProfile) -> RunConfig {
    let mut c = RunConfig::new(
        StrategyConfig::new(StrategyKind::Naive),
        SizeSchedule::zipf_small(),
        vec![0, 1, 2, 3],
        0,
    );
    c.profile = profile;
    c.hidden = vec![16];
    c.learning_rate = 0.05;
    c
}

fn lwf(lambda: f64) -> StrategyConfig {
    StrategyConfig {
        lambda_lwf: lambda,
        ..StrategyConfig::new(StrategyKind::Lwf)
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// One comparison per seed, each on its own data draw.
fn per_seed_comparisons(
    profile: MetricProfile,
    n_classes: usize,
    strategies: &[StrategyConfig],
    data_seeds: std::ops::Range<u64>,
    run_base: u64,
) -> Result<Vec<Comparison>, String> {
    let orders = enumerate_orders(4).map_err(err)?;
    data_seeds
        .enumerate()
        .map(|(i, ds)| {
            let data = drift_sources(n_classes, ds)?;
            compare_strategies(
                &base_config(profile),
                strategies,
                &orders,
                &[rep_seed(run_base, i)],
                &data,
                workers(),
            )
            .map_err(err)
        })
        .collect()
}

/// λ with the best mean deviation on tuning seeds disjoint from evaluation.
fn tune_lambda(profile: MetricProfile, n_classes: usize) -> Result<f64, String> {
    let grid = [0.3, 1.0, 3.0];
    let cands: Vec<StrategyConfig> = grid.iter().map(|&l| lwf(l)).collect();
    let cmps = per_seed_comparisons(profile, n_classes, &cands, 500..503, 500)?;
    let mean = |j: usize| cmps.iter().map(|c| c.strategies[j].mean_deviation_pct).sum::<f64>();
    let better = |a: f64, b: f64| if profile.lower_is_better() { a < b } else { a > b };
    let mut best = 0;
    for j in 1..grid.len() {
        if better(mean(j), mean(best)) {
            best = j;
        }
    }
    Ok(grid[best])
}

fn mad_ordering() -> Outcome {
    let t = Instant::now();
    let profile = MetricProfile::Mad;
    let lambda = tune_lambda(profile, 2)?;
    let strategies = [StrategyConfig::new(StrategyKind::Naive), lwf(lambda)];
    let cmps = per_seed_comparisons(profile, 2, &strategies, 1000..1010, 0)?;
    let naive: Vec<f64> = cmps.iter().map(|c| c.strategies[0].mean_deviation_pct).collect();
    let ours: Vec<f64> = cmps.iter().map(|c| c.strategies[1].mean_deviation_pct).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let wins = ours.iter().zip(&naive).filter(|(l, n)| l < n).count();
    let (mn, ml) = (mean(&naive), mean(&ours));
    let secs = t.elapsed().as_secs_f64();
    check(
        0.0 <= ml && ml < mn && wins >= 8 && secs < 600.0,
        format!(
            "deviation Joint 0 <= LwF(λ={lambda}) {ml:.2}% < Naive {mn:.2}%, LwF beats Naive in {wins}/10 seeds, {secs:.0}s"
        ),
    )
}

fn cls_ordering() -> Outcome {
    let profile = MetricProfile::Cls;
    let lambda = tune_lambda(profile, 10)?;
    let strategies = [
        StrategyConfig::new(StrategyKind::Naive),
        StrategyConfig::new(StrategyKind::Si),
        lwf(lambda),
    ];
    let cmps = per_seed_comparisons(profile, 10, &strategies, 1000..1010, 0)?;
    let mut closer = 0;
    let mut sums = [0.0; 3];
    for c in &cmps {
        let d: Vec<f64> = c.strategies.iter().map(|s| s.mean_deviation_pct).collect();
        closer += (d[2].abs() < d[0].abs() && d[2].abs() < d[1].abs()) as usize;
        for (s, v) in sums.iter_mut().zip(&d) {
            *s += v / cmps.len() as f64;
        }
    }
    check(
        closer >= 8,
        format!(
            "accuracy deviation Naive {:.2}%, SI {:.2}%, LwF(λ={lambda}) {:.2}%; LwF closest in {closer}/10 seeds",
            sums[0], sums[1], sums[2]
        ),
    )
}

// ---------------------------------------------------------------- 10

fn lambda_size_trend() -> Outcome {
    let data = drift_sources(2, 3000)?;
    let spec = GridSpec {
        base: base_config(MetricProfile::Mad),
        sizes: vec![50, 500],
        lambdas: vec![0.3, 1.0, 3.0, 10.0, 30.0],
        orders: enumerate_orders(4).map_err(err)?,
        seeds: (0..5).map(|i| rep_seed(3000, i)).collect(),
    };
    let grid = grid_sweep(&spec, &data, workers()).map_err(err)?;
    let best = |s| grid.best_lambda(s).ok_or(format!("no successful runs for size {s}"));
    let (b50, b500) = (best(50)?, best(500)?);
    let row = |k: usize| {
        grid.cells[k]
            .iter()
            .map(|c| format!("{:.3}", c.auc))
            .collect::<Vec<_>>()
            .join(" ")
    };
    check(
        b50 >= b500,
        format!(
            "best λ: size 50 → {b50}, size 500 → {b500} (AUC rows [{}] / [{}])",
            row(0),
            row(1)
        ),
    )
}

// ---------------------------------------------------------------- 11

fn grid_determinism() -> Outcome {
    let data = synth_sources(&SynthSourceSpec {
        samples_per_class: 100,
        seed: 77,
        ..Default::default()
    })
    .map_err(err)?;
    let mut base = base_config(MetricProfile::Mad);
    base.strategy.epochs_per_experience = 2;
    let spec = GridSpec {
        base,
        sizes: vec![50, 100],
        lambdas: vec![0.0, 1.0, 10.0],
        orders: enumerate_orders(4).map_err(err)?[..3].to_vec(),
        seeds: vec![1, 2],
    };
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    for w in [1, 8] {
        let dir = tmp.path().join(format!("w{w}"));
        let grid = grid_sweep(&spec, &data, w).map_err(err)?;
        let manifest = Manifest::new(
            "grid",
            MetricProfile::Mad,
            spec.base.fingerprint(),
            &spec.seeds,
            &spec.orders,
        );
        write_grid(&dir, &grid, manifest).map_err(err)?;
        outputs.push(read_dir_bytes(&dir)?);
    }
    let n = outputs[0].len();
    check(
        n > 0 && outputs[0] == outputs[1],
        format!("{n} output files byte-identical for 1 and 8 workers"),
    )
}

fn read_dir_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(err)? {
        let path = entry.map_err(err)?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        out.insert(name, fs::read(&path).map_err(err)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- 12

fn conservation() -> Outcome {
    let mut rng = seed::rng(0x636f_6e73);
    let mut chunks = 0usize;
    for cfg in 0..100 {
        let n_sources = rng.random_range(1..=5usize);
        let schedule = match rng.random_range(0..3) {
            0 => SizeSchedule::zipf_small(),
            1 => SizeSchedule::zipf_large(),
            _ => SizeSchedule::fixed(candidate_sizes()[rng.random_range(0..10)]),
        };
        let min_len = if matches!(schedule.mode, SizeMode::Fixed(_)) { 1 } else { 50 };
        // one feature column holds a unique sample id
        let mut next_id = 0.0;
        let mut sources = Vec::new();
        for s in 0..n_sources {
            let len = rng.random_range(min_len..=1500usize);
            let features: Vec<f64> = (0..len)
                .flat_map(|_| {
                    next_id += 1.0;
                    [next_id, s as f64]
                })
                .collect();
            let labels = (0..len).map(|k| k % 2).collect();
            sources.push(Dataset::new(format!("s{s}"), 2, 2, features, labels).map_err(err)?);
        }
        let test = Dataset::new("test", 2, 2, vec![-1.0, -1.0, -2.0, -2.0], vec![0, 1])
            .map_err(err)?;
        let mut order: Vec<usize> = (0..n_sources).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let stream = match build_stream(&sources, &order, &schedule, &test, rng.random()) {
            Ok(s) => s,
            // nothing to cut when every source is below the minimum chunk
            Err(_) if sources.iter().all(|s| s.len() < MIN_CHUNK) => continue,
            Err(e) => return Err(format!("config {cfg}: {e}")),
        };
        for (sid, src) in sources.iter().enumerate() {
            let mine: Vec<&Experience> =
                stream.experiences.iter().filter(|e| e.source_id == sid).collect();
            let used: usize = mine.iter().map(|e| e.data.len()).sum();
            let dropped: usize = stream
                .dropped
                .iter()
                .filter(|d| d.source_id == sid)
                .map(|d| d.count)
                .sum();
            if used + dropped != src.len() || dropped >= MIN_CHUNK {
                return Err(format!(
                    "config {cfg}, source {sid}: {used} in chunks + {dropped} dropped != {}",
                    src.len()
                ));
            }
            let mut ids: Vec<u64> = mine
                .iter()
                .flat_map(|e| e.data.features().iter_rows().map(|r| r[0] as u64))
                .collect();
            let n = ids.len();
            ids.sort_unstable();
            ids.dedup();
            let own = mine.iter().all(|e| e.data.features().iter_rows().all(|r| r[1] == sid as f64));
            if ids.len() != n || !own {
                return Err(format!("config {cfg}, source {sid}: duplicated or foreign samples"));
            }
            chunks += mine.len();
        }
    }
    Ok(format!("100 configurations, {chunks} chunks, every sample accounted for"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient soundness", gradient_soundness),
        ("LwF collapse", lwf_collapse),
        ("zero-penalty collapses", penalty_collapse),
        ("SLDA partition invariance", slda_partition_invariance),
        ("metric oracles", metric_oracles),
        ("BRoT algebra", brot_algebra),
        ("Zipf schedule", zipf_schedule),
        ("MAD ordering vs Joint and Naive", mad_ordering),
        ("classification ordering vs Naive and SI", cls_ordering),
        ("λ vs chunk size trend", lambda_size_trend),
        ("grid determinism across workers", grid_determinism),
        ("stream conservation", conservation),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {:>2}. {name}: {detail} [{:.1}s]",
            i + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
