//! Incremental training strategies. Each consumes one experience at a time
//! and updates a [`Learner`] in place.

mod ewc;
mod lwf;
mod si;
mod slda;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use ewc::{estimate_fisher, ewc_penalty, EwcState};
pub use lwf::lwf_loss;
pub use si::SiState;
pub use slda::SldaState;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{cce_loss_and_grad, sgd_step, softmax_rows, Batch, Matrix, MlpModel, OptimizerState};
use crate::seed;
use crate::stream::Experience;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Naive,
    Joint,
    Lwf,
    Ewc,
    Si,
    Slda,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Naive,
        StrategyKind::Joint,
        StrategyKind::Lwf,
        StrategyKind::Ewc,
        StrategyKind::Si,
        StrategyKind::Slda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::Joint => "joint",
            StrategyKind::Lwf => "lwf",
            StrategyKind::Ewc => "ewc",
            StrategyKind::Si => "si",
            StrategyKind::Slda => "slda",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Weight of the distillation term.
    pub lambda_lwf: f64,
    pub distill_temperature: f64,
    pub lambda_ewc: f64,
    pub si_c: f64,
    pub si_xi: f64,
    pub slda_shrinkage: f64,
    pub epochs_per_experience: usize,
    pub batch_size: usize,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Naive,
            lambda_lwf: 0.0,
            distill_temperature: 2.0,
            lambda_ewc: 100.0,
            si_c: 0.1,
            si_xi: 0.1,
            slda_shrinkage: 1e-4,
            epochs_per_experience: 10,
            batch_size: 32,
        }
    }
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        StrategyConfig {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64, what: &str| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be finite and non-negative, got {v}")))
            }
        };
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive, got {v}")))
            }
        };
        nonneg(self.lambda_lwf, "lambda_lwf")?;
        pos(self.distill_temperature, "distill_temperature")?;
        nonneg(self.lambda_ewc, "lambda_ewc")?;
        nonneg(self.si_c, "si_c")?;
        pos(self.si_xi, "si_xi")?;
        if !(self.slda_shrinkage > 0.0 && self.slda_shrinkage < 1.0) {
            return Err(Error::Config(format!(
                "slda_shrinkage must lie in (0, 1), got {}",
                self.slda_shrinkage
            )));
        }
        if self.epochs_per_experience == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Per-strategy memory carried across experiences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrategyState {
    Plain,
    Lwf { teacher: Option<MlpModel> },
    Ewc(EwcState),
    Si(SiState),
    Slda(SldaState),
}

/// Model, optimizer and strategy memory owned by one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub model: MlpModel,
    pub opt: OptimizerState,
    pub state: StrategyState,
}

impl Learner {
    pub fn new(cfg: &StrategyConfig, model: MlpModel, opt: OptimizerState) -> Result<Self> {
        cfg.validate()?;
        model.params().check_shape(&opt.velocities, "optimizer velocities")?;
        let state = match cfg.kind {
            StrategyKind::Naive | StrategyKind::Joint => StrategyState::Plain,
            StrategyKind::Lwf => StrategyState::Lwf { teacher: None },
            StrategyKind::Ewc => StrategyState::Ewc(EwcState::default()),
            StrategyKind::Si => StrategyState::Si(SiState::new(&model)),
            StrategyKind::Slda => StrategyState::Slda(SldaState::new(
                model.input_dim(),
                model.n_classes(),
                cfg.slda_shrinkage,
            )?),
        };
        Ok(Learner { model, opt, state })
    }

    /// Class probabilities for every row of `x`. SLDA learners answer from
    /// their discriminants, all others from the network.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(softmax_rows(&self.logits(x)?, 1.0))
    }

    /// Unnormalized class scores: network logits, or SLDA discriminants.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        match &self.state {
            StrategyState::Slda(s) => s.predict(x),
            _ => self.model.forward_features(x),
        }
    }
}

fn check_experience(model: &MlpModel, data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Stream("empty experience".into()));
    }
    if data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "experience dim {} does not match model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    if data.n_classes() > model.n_classes() {
        return Err(Error::Shape(format!(
            "experience has {} classes, model outputs {}",
            data.n_classes(),
            model.n_classes()
        )));
    }
    Ok(())
}

/// Trains on one experience and updates the strategy memory at its end.
pub fn train_experience(
    learner: &mut Learner,
    exp: &Experience,
    cfg: &StrategyConfig,
    seed: u64,
) -> Result<()> {
    train_on(learner, &exp.data, cfg, seed).map_err(|e| e.at_experience(exp.index))
}

/// Conventional training on the union of all data, as one experience.
pub fn joint_train(learner: &mut Learner, all_data: &Dataset, cfg: &StrategyConfig, seed: u64) -> Result<()> {
    train_on(learner, all_data, cfg, seed)
}

fn train_on(learner: &mut Learner, data: &Dataset, cfg: &StrategyConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    check_experience(&learner.model, data)?;

    if let StrategyState::Slda(s) = &mut learner.state {
        for (i, &y) in data.labels().iter().enumerate() {
            s.fit_sample(data.feature(i), y)?;
        }
        return Ok(());
    }

    let start = learner.model.params().clone();
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..cfg.epochs_per_experience {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let batch = data.batch(idx)?;
            step(learner, &batch, cfg)?;
        }
    }

    let Learner { model, state, .. } = learner;
    match state {
        StrategyState::Lwf { teacher } => *teacher = Some(model.clone()),
        StrategyState::Ewc(s) => s.consolidate(model, data)?,
        StrategyState::Si(s) => s.consolidate(model.params(), &start, cfg.si_xi)?,
        StrategyState::Plain | StrategyState::Slda(_) => {}
    }
    Ok(())
}

fn step(learner: &mut Learner, batch: &Batch, cfg: &StrategyConfig) -> Result<()> {
    let Learner { model, opt, state } = learner;
    let x = batch.features();
    let trace = model.forward_trace(x)?;
    let dlogits = match state {
        StrategyState::Lwf {
            teacher: Some(teacher),
        } if cfg.lambda_lwf > 0.0 => {
            let teacher_logits = teacher.forward_features(x)?;
            let (_, mut d) = lwf_loss(
                &trace.logits,
                &teacher_logits,
                batch.labels(),
                cfg.lambda_lwf,
                cfg.distill_temperature,
            )?;
            // Descend (CE + lambda KL) / (1 + lambda): same minimizers, but the
            // stiffness stays bounded so plain SGD is stable for any lambda.
            let scale = 1.0 / (1.0 + cfg.lambda_lwf);
            d.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
            d
        }
        _ => cce_loss_and_grad(&trace.logits, batch.labels())?.1,
    };
    let mut grads = model.backward_trace(x, &trace, &dlogits)?;

    match state {
        StrategyState::Ewc(s) if cfg.lambda_ewc > 0.0 && s.fisher.is_some() => {
            let (_, g) = s.penalty(model, cfg.lambda_ewc)?;
            grads.add_scaled(1.0, &g);
            sgd_step(model, &grads, opt)
        }
        StrategyState::Si(s) => {
            // the path integral tracks the task-loss gradient only
            let task_grads = if cfg.si_c > 0.0 && s.anchor.is_some() {
                let task = grads.clone();
                let (_, g) = s.penalty(model, cfg.si_c)?;
                grads.add_scaled(1.0, &g);
                task
            } else {
                grads.clone()
            };
            let before = model.params().clone();
            sgd_step(model, &grads, opt)?;
            s.accumulate_step(&task_grads, &before, model.params())
        }
        _ => sgd_step(model, &grads, opt),
    }
}
