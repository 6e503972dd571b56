//! Scenario orchestration: single runs, strategy comparisons over source
//! orders and seeds, and chunk-size x lambda grid sweeps.
//!
//! Every run is a pure function of its [`RunConfig`] and the data. Seeds for
//! the runs of a sweep are derived from the base seed and the repetition
//! index, never from scheduling, so worker count cannot change any result.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, SourceSet};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricRecord, RankingTable, ScoreSet};
use crate::nn::{layer_widths, MlpModel, OptimizerState, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM};
use crate::seed::{self, KEY_INIT, KEY_RUN, KEY_STREAM, KEY_TRAIN};
use crate::strategies::{joint_train, train_experience, Learner, StrategyConfig, StrategyKind};
use crate::stream::{build_stream, SizeMode, SizeSchedule};

/// Scores clamp for SLDA classes that have never been observed.
const SCORE_LIMIT: f64 = 1e300;

/// MAD λ grid (chunk-size sweeps on detection data).
pub const MAD_LAMBDAS: [f64; 8] = [100.0, 200.0, 400.0, 600.0, 800.0, 1000.0, 1200.0, 1500.0];
/// Classification λ grid.
pub const CLS_LAMBDAS: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0];
pub const DEFAULT_SEEDS_PER_CELL: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricProfile {
    /// Binary bona fide (0) vs morphed (1) detection.
    Mad,
    /// Multi-class top-1 accuracy.
    Cls,
}

impl MetricProfile {
    /// Per-experience value summarized by the AUC.
    pub fn primary(self, r: &MetricRecord) -> f64 {
        match self {
            MetricProfile::Mad => r.mad_point.unwrap_or(f64::NAN),
            MetricProfile::Cls => r.top1_accuracy,
        }
    }

    /// Per-experience value used to rank algorithms for BRoT.
    pub fn ranking(self, r: &MetricRecord) -> f64 {
        match self {
            MetricProfile::Mad => r.bpcer_at_01pct.unwrap_or(f64::NAN),
            MetricProfile::Cls => r.top1_accuracy,
        }
    }

    pub fn lower_is_better(self) -> bool {
        matches!(self, MetricProfile::Mad)
    }

    pub fn default_lambdas(self) -> Vec<f64> {
        match self {
            MetricProfile::Mad => MAD_LAMBDAS.to_vec(),
            MetricProfile::Cls => CLS_LAMBDAS.to_vec(),
        }
    }
}

impl std::str::FromStr for MetricProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mad" => Ok(MetricProfile::Mad),
            "cls" | "classification" => Ok(MetricProfile::Cls),
            _ => Err(Error::Config(format!("profile must be mad or cls, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for MetricProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricProfile::Mad => "mad",
            MetricProfile::Cls => "cls",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub strategy: StrategyConfig,
    pub schedule: SizeSchedule,
    pub order: Vec<usize>,
    pub seed: u64,
    pub profile: MetricProfile,
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl RunConfig {
    pub fn new(strategy: StrategyConfig, schedule: SizeSchedule, order: Vec<usize>, seed: u64) -> Self {
        RunConfig {
            strategy,
            schedule,
            order,
            seed,
            profile: MetricProfile::Mad,
            hidden: DEFAULT_HIDDEN.to_vec(),
            learning_rate: DEFAULT_LEARNING_RATE,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    /// SHA-256 over the canonical JSON form of every field.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// The regularization weight that matters for the configured strategy.
    pub fn lambda(&self) -> f64 {
        match self.strategy.kind {
            StrategyKind::Lwf => self.strategy.lambda_lwf,
            StrategyKind::Ewc => self.strategy.lambda_ewc,
            StrategyKind::Si => self.strategy.si_c,
            _ => 0.0,
        }
    }

    fn with(&self, kind: StrategyKind) -> RunConfig {
        let mut c = self.clone();
        c.strategy.kind = kind;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    pub fingerprint: String,
    /// One record per training experience, in order.
    pub records: Vec<MetricRecord>,
    /// AUC of the profile's primary metric, divided by N.
    pub auc: f64,
    /// Same trapezoid divided by N - 1.
    pub auc_interval: f64,
    pub dropped_samples: usize,
    pub wall_time_secs: f64,
}

impl RunResult {
    pub fn primary_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| self.config.profile.primary(r)).collect()
    }

    pub fn ranking_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| self.config.profile.ranking(r)).collect()
    }

    /// AUC over time of an arbitrary per-record metric.
    pub fn auc_of(&self, f: impl Fn(&MetricRecord) -> Option<f64>) -> f64 {
        let v: Option<Vec<f64>> = self.records.iter().map(f).collect();
        v.and_then(|v| metrics::auc_over_time(&v).ok()).unwrap_or(f64::NAN)
    }

    pub fn run_id(&self) -> &str {
        &self.fingerprint[..12]
    }
}

/// Percentage deviation of a run's AUC from the Joint reference. The Joint
/// value is held constant over the same number of testing experiences, so
/// positive means a higher value than Joint (worse for error metrics, better
/// for accuracy).
pub fn auc_deviation_pct(series: &[f64], joint_value: f64) -> Result<f64> {
    let own = metrics::auc_over_time(series)?;
    let reference = metrics::auc_over_time(&vec![joint_value; series.len()])?;
    Ok((own - reference) / reference * 100.0)
}

/// Metrics of the learner on the fixed test set.
pub fn evaluate(learner: &Learner, test: &Dataset, profile: MetricProfile, index: usize) -> Result<MetricRecord> {
    let logits = learner.logits(test.features())?;
    let preds: Vec<usize> = logits
        .iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect();
    let accuracy = metrics::top1_accuracy(&preds, test.labels())?;
    match profile {
        MetricProfile::Cls => Ok(MetricRecord::classification(index, accuracy)),
        MetricProfile::Mad => {
            if logits.cols() != 2 {
                return Err(Error::Config(format!(
                    "MAD profile needs 2 classes, got {}",
                    logits.cols()
                )));
            }
            // log-odds of "morphed": strictly monotone in its softmax
            // probability, without saturating at 0 or 1
            let mut bona = Vec::new();
            let mut morph = Vec::new();
            for (r, &y) in logits.iter_rows().zip(test.labels()) {
                let s = (r[1] - r[0]).clamp(-SCORE_LIMIT, SCORE_LIMIT);
                let s = if s.is_nan() { 0.0 } else { s };
                if y == 0 {
                    bona.push(s);
                } else {
                    morph.push(s);
                }
            }
            MetricRecord::mad(index, &ScoreSet::new(bona, morph)?, accuracy)
        }
    }
}

/// Builds the stream, then trains and tests in lockstep: one record per
/// training experience, all on the same test set. Joint trains once on the
/// union of the chunks.
pub fn run_scenario(cfg: &RunConfig, data: &SourceSet) -> Result<RunResult> {
    let started = Instant::now();
    cfg.strategy.validate()?;
    let test = &data.test;
    let widths = layer_widths(test.dim(), &cfg.hidden, test.n_classes());
    let model = MlpModel::init(&widths, seed::derive_seed(cfg.seed, &[KEY_INIT]))?;
    let opt = OptimizerState::new(&model, cfg.learning_rate, cfg.momentum)?;
    let mut learner = Learner::new(&cfg.strategy, model, opt)?;
    let stream = build_stream(
        &data.sources,
        &cfg.order,
        &cfg.schedule,
        test,
        seed::derive_seed(cfg.seed, &[KEY_STREAM]),
    )?;
    let train_seed = |i: usize| seed::derive_seed(cfg.seed, &[KEY_TRAIN, i as u64]);

    let mut records = Vec::with_capacity(stream.len());
    if cfg.strategy.kind == StrategyKind::Joint {
        let all = stream.union()?;
        joint_train(&mut learner, &all, &cfg.strategy, train_seed(1))?;
        records.push(evaluate(&learner, test, cfg.profile, 1)?);
    } else {
        for exp in &stream.experiences {
            train_experience(&mut learner, exp, &cfg.strategy, train_seed(exp.index))?;
            let rec = evaluate(&learner, &stream.test_set, cfg.profile, exp.index)
                .map_err(|e| e.at_experience(exp.index))?;
            records.push(rec);
        }
    }

    let series: Vec<f64> = records.iter().map(|r| cfg.profile.primary(r)).collect();
    Ok(RunResult {
        fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        auc: metrics::auc_over_time(&series)?,
        auc_interval: metrics::auc_over_time_interval(&series)?,
        records,
        dropped_samples: stream.dropped.iter().map(|d| d.count).sum(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Seed of repetition `rep` under `base`.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    seed::derive_seed(base, &[KEY_RUN, rep as u64])
}

pub fn rep_seeds(base: u64, reps: usize) -> Vec<u64> {
    (0..reps).map(|r| rep_seed(base, r)).collect()
}

fn run_jobs(jobs: &[RunConfig], data: &SourceSet, workers: usize) -> Result<Vec<Result<RunResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(|c| run_scenario(c, data)).collect()))
}

/// Runs of one incremental strategy alongside the Joint reference of the
/// same (order, seed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub label: String,
    pub config: StrategyConfig,
    /// Mean AUC deviation from Joint, in percent.
    pub mean_deviation_pct: f64,
    /// Mean deviation per repetition seed (averaged over orders).
    pub per_seed_deviation_pct: Vec<f64>,
    pub mean_auc: f64,
    pub mean_brot: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub profile: MetricProfile,
    pub seeds: Vec<u64>,
    pub orders: Vec<Vec<usize>>,
    pub strategies: Vec<StrategySummary>,
    pub joint_mean_auc: f64,
    pub runs: Vec<RunResult>,
}

pub fn strategy_label(cfg: &StrategyConfig) -> String {
    match cfg.kind {
        StrategyKind::Lwf => format!("lwf@{}", cfg.lambda_lwf),
        StrategyKind::Ewc => format!("ewc@{}", cfg.lambda_ewc),
        StrategyKind::Si => format!("si@{}", cfg.si_c),
        k => k.to_string(),
    }
}

/// Compares incremental strategies against Joint over every (order, seed)
/// pair. BRoT ranks the incremental strategies at each testing experience
/// of a shared stream.
pub fn compare_strategies(
    base: &RunConfig,
    strategies: &[StrategyConfig],
    orders: &[Vec<usize>],
    seeds: &[u64],
    data: &SourceSet,
    workers: usize,
) -> Result<Comparison> {
    if strategies.is_empty() || orders.is_empty() || seeds.is_empty() {
        return Err(Error::Config("comparison needs strategies, orders and seeds".into()));
    }
    if strategies.iter().any(|s| s.kind == StrategyKind::Joint) {
        return Err(Error::Config("joint is the implicit reference, do not list it".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..orders.len()).map(move |o| (s, o)))
        .collect();
    let mut jobs = Vec::new();
    for &(s, o) in &pairs {
        let mut joint = base.with(StrategyKind::Joint);
        joint.order = orders[o].clone();
        joint.seed = seeds[s];
        jobs.push(joint);
        for st in strategies {
            let mut c = base.clone();
            c.strategy = st.clone();
            c.order = orders[o].clone();
            c.seed = seeds[s];
            jobs.push(c);
        }
    }
    let results: Vec<RunResult> = run_jobs(&jobs, data, workers)?
        .into_iter()
        .collect::<Result<_>>()?;

    let k = strategies.len() + 1;
    let profile = base.profile;
    let mut dev = vec![vec![0.0; seeds.len()]; strategies.len()];
    let mut auc = vec![0.0; strategies.len()];
    let mut brot_sum = vec![0.0; strategies.len()];
    let mut joint_auc = 0.0;
    for (p, &(s, _)) in pairs.iter().enumerate() {
        let block = &results[p * k..(p + 1) * k];
        let joint_value = profile.primary(&block[0].records[0]);
        joint_auc += block[0].auc;
        for (j, r) in block[1..].iter().enumerate() {
            dev[j][s] += auc_deviation_pct(&r.primary_series(), joint_value)?;
            auc[j] += r.auc;
        }
        let table = RankingTable::new(
            strategies.iter().map(strategy_label).collect(),
            block[1..].iter().map(|r| r.ranking_series()).collect(),
        )?;
        for (b, v) in brot_sum.iter_mut().zip(metrics::brot(&table, profile.lower_is_better())?) {
            *b += v;
        }
    }
    let n_pairs = pairs.len() as f64;
    let n_orders = orders.len() as f64;
    let summaries = strategies
        .iter()
        .enumerate()
        .map(|(j, st)| {
            let per_seed: Vec<f64> = dev[j].iter().map(|d| d / n_orders).collect();
            StrategySummary {
                label: strategy_label(st),
                config: st.clone(),
                mean_deviation_pct: per_seed.iter().sum::<f64>() / seeds.len() as f64,
                per_seed_deviation_pct: per_seed,
                mean_auc: auc[j] / n_pairs,
                mean_brot: brot_sum[j] / n_pairs,
                runs: pairs.len(),
            }
        })
        .collect();
    Ok(Comparison {
        profile,
        seeds: seeds.to_vec(),
        orders: orders.to_vec(),
        strategies: summaries,
        joint_mean_auc: joint_auc / n_pairs,
        runs: results,
    })
}

/// Grid axes and replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Template run; its schedule, order, seed and λ are overridden per cell.
    pub base: RunConfig,
    pub sizes: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub orders: Vec<Vec<usize>>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub auc_deviation_pct: f64,
    pub auc: f64,
    pub auc_eer: f64,
    pub auc_bpcer10: f64,
    pub auc_bpcer1: f64,
    pub auc_bpcer01: f64,
    pub auc_accuracy: f64,
    /// BRoT among the λ values of the same chunk size.
    pub brot: f64,
    /// Successful (order, seed) pairs aggregated into this cell.
    pub count: usize,
    pub failures: usize,
    pub first_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub profile: MetricProfile,
    /// Ascending chunk sizes (rows).
    pub sizes: Vec<usize>,
    /// λ values (columns).
    pub lambdas: Vec<f64>,
    pub cells: Vec<Vec<GridCell>>,
    pub runs: Vec<RunResult>,
}

impl GridResult {
    /// Row-major matrix of one cell field.
    pub fn matrix(&self, f: impl Fn(&GridCell) -> f64) -> Vec<Vec<f64>> {
        self.cells.iter().map(|row| row.iter().map(&f).collect()).collect()
    }

    /// λ with the best mean AUC in the row of `size` (ties: smaller λ).
    pub fn best_lambda(&self, size: usize) -> Option<f64> {
        let row = self.sizes.iter().position(|&s| s == size)?;
        let lower = self.profile.lower_is_better();
        let mut best: Option<(f64, f64)> = None;
        for (j, cell) in self.cells[row].iter().enumerate() {
            if cell.count == 0 || cell.auc.is_nan() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if lower {
                        cell.auc < b
                    } else {
                        cell.auc > b
                    }
                }
            };
            if better {
                best = Some((self.lambdas[j], cell.auc));
            }
        }
        best.map(|(l, _)| l)
    }
}

/// One LwF run per (size, λ, order, seed) plus one Joint reference per
/// (size, order, seed). Cells average over (order, seed); failed runs are
/// counted per cell and do not abort the grid.
pub fn grid_sweep(spec: &GridSpec, data: &SourceSet, workers: usize) -> Result<GridResult> {
    if spec.sizes.is_empty() || spec.lambdas.is_empty() || spec.orders.is_empty() || spec.seeds.is_empty() {
        return Err(Error::Config("grid axes, orders and seeds must be non-empty".into()));
    }
    let mut sizes = spec.sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let pairs: Vec<(usize, usize)> = (0..spec.seeds.len())
        .flat_map(|s| (0..spec.orders.len()).map(move |o| (s, o)))
        .collect();
    let nl = spec.lambdas.len();
    let block = nl + 1;
    let mut jobs = Vec::with_capacity(sizes.len() * pairs.len() * block);
    for &size in &sizes {
        let schedule = SizeSchedule {
            mode: SizeMode::Fixed(size),
            ..spec.base.schedule
        };
        for &(s, o) in &pairs {
            let mut base = spec.base.clone();
            base.schedule = schedule;
            base.order = spec.orders[o].clone();
            base.seed = spec.seeds[s];
            jobs.push(base.with(StrategyKind::Joint));
            for &lambda in &spec.lambdas {
                let mut c = base.with(StrategyKind::Lwf);
                c.strategy.lambda_lwf = lambda;
                jobs.push(c);
            }
        }
    }
    let results = run_jobs(&jobs, data, workers)?;

    let profile = spec.base.profile;
    let mut cells = Vec::with_capacity(sizes.len());
    for row in 0..sizes.len() {
        let mut acc: Vec<CellAcc> = (0..nl).map(|_| CellAcc::default()).collect();
        for p in 0..pairs.len() {
            let start = (row * pairs.len() + p) * block;
            let joint = &results[start];
            let runs = &results[start + 1..start + block];
            let joint_value = match joint {
                Ok(j) => profile.primary(&j.records[0]),
                Err(e) => {
                    for a in &mut acc {
                        a.fail(format!("joint reference: {e}"));
                    }
                    continue;
                }
            };
            let mut ok: Vec<(usize, &RunResult)> = Vec::with_capacity(nl);
            for (j, r) in runs.iter().enumerate() {
                match r {
                    Ok(r) => match auc_deviation_pct(&r.primary_series(), joint_value) {
                        Ok(d) => {
                            acc[j].add(r, d);
                            ok.push((j, r));
                        }
                        Err(e) => acc[j].fail(e.to_string()),
                    },
                    Err(e) => acc[j].fail(e.to_string()),
                }
            }
            if !ok.is_empty() {
                let table = RankingTable::new(
                    ok.iter().map(|(j, _)| spec.lambdas[*j].to_string()).collect(),
                    ok.iter().map(|(_, r)| r.ranking_series()).collect(),
                );
                // λ runs of one (size, order, seed) share their stream, so
                // the table is rectangular unless a run failed midway
                if let Ok(table) = table {
                    for ((j, _), b) in ok.iter().zip(metrics::brot(&table, profile.lower_is_better())?) {
                        acc[*j].brot += b;
                    }
                }
            }
        }
        cells.push(acc.into_iter().map(CellAcc::finish).collect());
    }
    Ok(GridResult {
        profile,
        sizes,
        lambdas: spec.lambdas.clone(),
        cells,
        runs: results.into_iter().filter_map(|r| r.ok()).collect(),
    })
}

#[derive(Default)]
struct CellAcc {
    dev: f64,
    auc: f64,
    eer: f64,
    b10: f64,
    b1: f64,
    b01: f64,
    acc: f64,
    brot: f64,
    count: usize,
    failures: usize,
    first_error: Option<String>,
}

impl CellAcc {
    fn add(&mut self, r: &RunResult, deviation: f64) {
        self.dev += deviation;
        self.auc += r.auc;
        self.eer += r.auc_of(|m| m.eer);
        self.b10 += r.auc_of(|m| m.bpcer_at_10pct);
        self.b1 += r.auc_of(|m| m.bpcer_at_1pct);
        self.b01 += r.auc_of(|m| m.bpcer_at_01pct);
        self.acc += r.auc_of(|m| Some(m.top1_accuracy));
        self.count += 1;
    }

    fn fail(&mut self, msg: String) {
        self.failures += 1;
        self.first_error.get_or_insert(msg);
    }

    fn finish(self) -> GridCell {
        let n = self.count as f64;
        let mean = |v: f64| if self.count == 0 { f64::NAN } else { v / n };
        GridCell {
            auc_deviation_pct: mean(self.dev),
            auc: mean(self.auc),
            auc_eer: mean(self.eer),
            auc_bpcer10: mean(self.b10),
            auc_bpcer1: mean(self.b1),
            auc_bpcer01: mean(self.b01),
            auc_accuracy: mean(self.acc),
            brot: mean(self.brot),
            count: self.count,
            failures: self.failures,
            first_error: self.first_error,
        }
    }
}

/// Groups values by key preserving first-seen order of keys.
pub(crate) fn group_ordered<K: Ord + Clone, V>(items: impl IntoIterator<Item = (K, V)>) -> Vec<(K, Vec<V>)> {
    let mut index: BTreeMap<K, usize> = BTreeMap::new();
    let mut out: Vec<(K, Vec<V>)> = Vec::new();
    for (k, v) in items {
        match index.get(&k) {
            Some(&i) => out[i].1.push(v),
            None => {
                index.insert(k.clone(), out.len());
                out.push((k, vec![v]));
            }
        }
    }
    out
}
