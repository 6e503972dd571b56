use incremad_core::data::{synth_sources, Dataset, SynthSourceSpec};
use incremad_core::nn::{MlpModel, OptimizerState};
use incremad_core::runner::{compare_strategies, evaluate, rep_seed, MetricProfile, RunConfig};
use incremad_core::stream::{enumerate_orders, Experience, SizeSchedule};
use incremad_core::strategies::{train_experience, Learner, StrategyConfig, StrategyKind, StrategyState};
use proptest::prelude::*;

fn experience(index: usize, data: &Dataset) -> Experience {
    Experience { index, source_id: index - 1, data: data.clone() }
}

fn learner(cfg: &StrategyConfig, widths: &[usize], seed: u64) -> Learner {
    let model = MlpModel::init(widths, seed).unwrap();
    let opt = OptimizerState::new(&model, 0.01, 0.9).unwrap();
    Learner::new(cfg, model, opt).unwrap()
}

fn two_sources(seed: u64) -> Vec<Dataset> {
    synth_sources(&SynthSourceSpec { n_sources: 2, samples_per_class: 100, seed, ..Default::default() })
        .unwrap()
        .sources
}

/// Distance travelled during the second experience, measured from the
/// teacher snapshot taken at the end of the first.
fn second_experience_displacement(lambda: f64, seed: u64) -> f64 {
    let cfg = StrategyConfig { lambda_lwf: lambda, ..StrategyConfig::new(StrategyKind::Lwf) };
    let src = two_sources(seed);
    let mut l = learner(&cfg, &[16, 32, 16, 2], seed);
    train_experience(&mut l, &experience(1, &src[0]), &cfg, 1).unwrap();
    let teacher = match &l.state {
        StrategyState::Lwf { teacher: Some(t) } => t.params().clone(),
        _ => panic!("teacher missing after first experience"),
    };
    assert_eq!(&teacher, l.model.params());
    train_experience(&mut l, &experience(2, &src[1]), &cfg, 2).unwrap();
    l.model.params().sq_distance(&teacher).sqrt()
}

#[test]
fn huge_lambda_pins_lwf_to_its_teacher() {
    for seed in 0..10 {
        let free = second_experience_displacement(0.0, seed);
        let pinned = second_experience_displacement(1e6, seed);
        assert!(pinned.is_finite() && pinned < free, "seed {seed}: {pinned} vs {free}");
    }
}

#[test]
fn teacher_only_changes_by_the_end_of_experience_copy() {
    let cfg = StrategyConfig { lambda_lwf: 2.0, ..StrategyConfig::new(StrategyKind::Lwf) };
    let src = two_sources(3);
    let mut l = learner(&cfg, &[16, 8, 2], 3);
    train_experience(&mut l, &experience(1, &src[0]), &cfg, 1).unwrap();
    let before = match &l.state {
        StrategyState::Lwf { teacher: Some(t) } => t.clone(),
        _ => panic!("no teacher"),
    };
    train_experience(&mut l, &experience(2, &src[1]), &cfg, 2).unwrap();
    match &l.state {
        StrategyState::Lwf { teacher: Some(t) } => {
            assert_ne!(t, &before);
            assert_eq!(t, &l.model);
        }
        _ => panic!("no teacher"),
    }
}

#[test]
fn importances_stay_non_negative_after_every_consolidation() {
    let src = synth_sources(&SynthSourceSpec { n_sources: 4, samples_per_class: 60, seed: 5, ..Default::default() })
        .unwrap()
        .sources;
    for kind in [StrategyKind::Ewc, StrategyKind::Si] {
        let cfg = StrategyConfig::new(kind);
        let mut l = learner(&cfg, &[16, 8, 2], 1);
        for (i, s) in src.iter().enumerate() {
            train_experience(&mut l, &experience(i + 1, s), &cfg, i as u64).unwrap();
            let importance = match &l.state {
                StrategyState::Ewc(e) => e.fisher.clone().unwrap(),
                StrategyState::Si(s) => s.importance.clone(),
                _ => unreachable!(),
            };
            assert!(importance.iter().all(|&v| v >= 0.0 && v.is_finite()), "{kind} after {}", i + 1);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slda_state_ignores_experience_boundaries(cuts in prop::collection::vec(1usize..299, 0..6)) {
        let src = synth_sources(&SynthSourceSpec { n_sources: 1, n_classes: 3, samples_per_class: 100, seed: 2, ..Default::default() })
            .unwrap()
            .sources
            .remove(0);
        let cfg = StrategyConfig::new(StrategyKind::Slda);
        let mut bounds = cuts.clone();
        bounds.extend([0, src.len()]);
        bounds.sort_unstable();
        bounds.dedup();
        let mut split = learner(&cfg, &[16, 3], 0);
        for (k, w) in bounds.windows(2).enumerate() {
            let idx: Vec<usize> = (w[0]..w[1]).collect();
            let part = src.subset("part", &idx).unwrap();
            train_experience(&mut split, &experience(k + 1, &part), &cfg, 0).unwrap();
        }
        let mut whole = learner(&cfg, &[16, 3], 0);
        train_experience(&mut whole, &experience(1, &src), &cfg, 0).unwrap();
        prop_assert_eq!(split.state, whole.state);
    }
}

fn accuracy(l: &Learner, data: &Dataset) -> f64 {
    evaluate(l, data, MetricProfile::Cls, 1).unwrap().top1_accuracy
}

#[test]
fn shifted_sources_do_not_transfer() {
    let mut gap = 0.0;
    for seed in 0..10 {
        let src = synth_sources(&SynthSourceSpec { samples_per_class: 400, seed, ..Default::default() })
            .unwrap()
            .sources;
        let n = src[0].len();
        let (fit, own): (Vec<usize>, Vec<usize>) = (0..n).partition(|i| i % 2 == 0);
        let cfg = StrategyConfig::new(StrategyKind::Naive);
        let mut l = learner(&cfg, &[16, 16, 2], seed);
        train_experience(&mut l, &experience(1, &src[0].subset("fit", &fit).unwrap()), &cfg, seed).unwrap();
        gap += accuracy(&l, &src[0].subset("own", &own).unwrap()) - accuracy(&l, &src[3]);
    }
    assert!(gap / 10.0 >= 0.10, "mean transfer gap {:.3}", gap / 10.0);
}

#[test]
fn without_shift_naive_matches_joint() {
    let mut base = RunConfig::new(StrategyConfig::new(StrategyKind::Naive), SizeSchedule::zipf_small(), vec![0, 1, 2, 3], 0);
    base.profile = MetricProfile::Cls;
    base.hidden = vec![16];
    let (mut naive, mut joint) = (0.0, 0.0);
    for seed in 0..10 {
        let data = synth_sources(&SynthSourceSpec { shift: 0.0, seed: 40 + seed, ..Default::default() }).unwrap();
        let orders = enumerate_orders(4).unwrap()[..1].to_vec();
        let cmp = compare_strategies(&base, &[StrategyConfig::new(StrategyKind::Naive)], &orders, &[rep_seed(0, seed as usize)], &data, 1).unwrap();
        // final accuracy after the whole stream against Joint's
        let runs = &cmp.runs;
        joint += runs[0].records[0].top1_accuracy / 10.0;
        naive += runs[1].records.last().unwrap().top1_accuracy / 10.0;
    }
    assert!((naive - joint).abs() <= 0.02, "naive {naive:.3} vs joint {joint:.3}");
}
