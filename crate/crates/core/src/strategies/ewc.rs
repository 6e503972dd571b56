//! Online elastic weight consolidation: one accumulated Fisher diagonal and a
//! single anchor refreshed after every experience.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax_in_place, MlpModel, ParamSet};

/// Diagonal Fisher information under the model's own predictive
/// distribution: for each sample, `sum_c p_c * (d log p_c / d theta)^2`,
/// averaged over samples. The expectation over labels replaces sampling.
pub fn estimate_fisher(model: &MlpModel, data: &Dataset) -> Result<ParamSet> {
    if data.is_empty() {
        return Err(Error::Stream("cannot estimate Fisher on an empty experience".into()));
    }
    let n_classes = model.n_classes();
    let mut fisher = model.params().zeros_like();
    for i in 0..data.len() {
        let x = data.batch(&[i])?;
        let trace = model.forward_trace(x.features())?;
        let mut p = trace.logits.row(0).to_vec();
        softmax_in_place(&mut p, 1.0);
        for c in 0..n_classes {
            if p[c] == 0.0 {
                continue;
            }
            // d(-log p_c)/dz = p - e_c; the sign vanishes once squared
            let mut dl = trace.logits.clone();
            dl.as_mut_slice().copy_from_slice(&p);
            dl.as_mut_slice()[c] -= 1.0;
            let g = model.backward_trace(x.features(), &trace, &dl)?;
            for (f, gk) in fisher.iter_mut().zip(g.iter()) {
                *f += p[c] * gk * gk;
            }
        }
    }
    let inv_n = 1.0 / data.len() as f64;
    for f in fisher.iter_mut() {
        *f *= inv_n;
    }
    Ok(fisher)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    pub fisher: Option<ParamSet>,
    pub anchor: Option<ParamSet>,
}

impl EwcState {
    /// `(lambda / 2) * sum F (theta - theta*)^2` and its gradient
    /// `lambda * F (theta - theta*)`.
    pub fn penalty(&self, model: &MlpModel, lambda: f64) -> Result<(f64, ParamSet)> {
        let (fisher, anchor) = match (&self.fisher, &self.anchor) {
            (Some(f), Some(a)) => (f, a),
            _ => return Err(Error::State("EWC penalty needs a Fisher diagonal and an anchor".into())),
        };
        ewc_penalty(model, fisher, anchor, lambda)
    }

    /// Adds the Fisher of the finished experience and moves the anchor.
    pub fn consolidate(&mut self, model: &MlpModel, data: &Dataset) -> Result<()> {
        let f = estimate_fisher(model, data)?;
        match &mut self.fisher {
            Some(acc) => acc.add_scaled(1.0, &f),
            None => self.fisher = Some(f),
        }
        self.anchor = Some(model.params().clone());
        Ok(())
    }
}

pub fn ewc_penalty(
    model: &MlpModel,
    fisher: &ParamSet,
    anchor: &ParamSet,
    lambda: f64,
) -> Result<(f64, ParamSet)> {
    model.params().check_shape(fisher, "EWC Fisher")?;
    model.params().check_shape(anchor, "EWC anchor")?;
    let mut grad = fisher.zeros_like();
    let mut penalty = 0.0;
    for (((g, &theta), &f), &star) in grad
        .iter_mut()
        .zip(model.params().iter())
        .zip(fisher.iter())
        .zip(anchor.iter())
    {
        let d = theta - star;
        penalty += f * d * d;
        *g = lambda * f * d;
    }
    Ok((0.5 * lambda * penalty, grad))
}
