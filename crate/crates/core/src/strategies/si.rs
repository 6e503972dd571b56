//! Synaptic intelligence: per-parameter importance from the path integral of
//! gradient times parameter motion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpModel, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    /// Running `-sum g * dtheta` within the current experience.
    pub omega_path: ParamSet,
    /// Consolidated importance, non-negative.
    pub importance: ParamSet,
    pub anchor: Option<ParamSet>,
}

impl SiState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros = model.params().zeros_like();
        SiState {
            omega_path: zeros.clone(),
            importance: zeros,
            anchor: None,
        }
    }

    /// `omega_path -= g * delta` for one optimizer step.
    pub fn accumulate(&mut self, grads: &ParamSet, delta: &ParamSet) -> Result<()> {
        self.omega_path.check_shape(grads, "SI gradients")?;
        self.omega_path.check_shape(delta, "SI parameter step")?;
        for ((w, g), d) in self.omega_path.iter_mut().zip(grads.iter()).zip(delta.iter()) {
            *w -= g * d;
        }
        Ok(())
    }

    /// Same as [`accumulate`](Self::accumulate) with the step given as the
    /// parameters before and after it.
    pub fn accumulate_step(&mut self, grads: &ParamSet, before: &ParamSet, after: &ParamSet) -> Result<()> {
        self.omega_path.check_shape(grads, "SI gradients")?;
        self.omega_path.check_shape(before, "SI parameters")?;
        self.omega_path.check_shape(after, "SI parameters")?;
        for (((w, g), b), a) in self
            .omega_path
            .iter_mut()
            .zip(grads.iter())
            .zip(before.iter())
            .zip(after.iter())
        {
            *w -= g * (a - b);
        }
        Ok(())
    }

    /// Folds the path into the importance:
    /// `Omega += max(path, 0) / ((end - start)^2 + xi)`, then resets the
    /// path and anchors at `end`.
    pub fn consolidate(&mut self, end: &ParamSet, start: &ParamSet, xi: f64) -> Result<()> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Config(format!("SI damping must be positive, got {xi}")));
        }
        self.importance.check_shape(end, "SI end parameters")?;
        self.importance.check_shape(start, "SI start parameters")?;
        for (((omega, path), e), s) in self
            .importance
            .iter_mut()
            .zip(self.omega_path.iter_mut())
            .zip(end.iter())
            .zip(start.iter())
        {
            let moved = e - s;
            *omega += path.max(0.0) / (moved * moved + xi);
            *path = 0.0;
        }
        self.anchor = Some(end.clone());
        Ok(())
    }

    /// `c * sum Omega (theta - theta*)^2` and gradient `2 c Omega (theta - theta*)`.
    /// Zero before the first consolidation.
    pub fn penalty(&self, model: &MlpModel, c: f64) -> Result<(f64, ParamSet)> {
        let mut grad = model.params().zeros_like();
        let Some(anchor) = &self.anchor else {
            return Ok((0.0, grad));
        };
        model.params().check_shape(anchor, "SI anchor")?;
        let mut penalty = 0.0;
        for (((g, &theta), &omega), &star) in grad
            .iter_mut()
            .zip(model.params().iter())
            .zip(self.importance.iter())
            .zip(anchor.iter())
        {
            let d = theta - star;
            penalty += omega * d * d;
            *g = 2.0 * c * omega * d;
        }
        Ok((c * penalty, grad))
    }
}
