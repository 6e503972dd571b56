//! Streaming linear discriminant analysis on input features.
//!
//! Keeps per-class running means and one shared running covariance, updated
//! one sample at a time. Prediction uses the shrunken covariance
//! `(1 - eps) * Sigma + eps * I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SldaState {
    pub dim: usize,
    pub n_classes: usize,
    pub shrinkage: f64,
    /// `n_classes x dim`, row-major.
    pub means: Vec<f64>,
    pub counts: Vec<u64>,
    /// `dim x dim`, row-major, symmetric.
    pub covariance: Vec<f64>,
    pub total: u64,
}

impl SldaState {
    pub fn new(dim: usize, n_classes: usize, shrinkage: f64) -> Result<Self> {
        if !(shrinkage > 0.0 && shrinkage < 1.0) {
            return Err(Error::Config(format!(
                "SLDA shrinkage must lie in (0, 1), got {shrinkage}"
            )));
        }
        if dim == 0 || n_classes == 0 {
            return Err(Error::Config("SLDA needs positive dim and class count".into()));
        }
        Ok(SldaState {
            dim,
            n_classes,
            shrinkage,
            means: vec![0.0; n_classes * dim],
            counts: vec![0; n_classes],
            covariance: vec![0.0; dim * dim],
            total: 0,
        })
    }

    pub fn mean(&self, class: usize) -> &[f64] {
        &self.means[class * self.dim..(class + 1) * self.dim]
    }

    /// Rank-one update of the shared covariance with the deviation from the
    /// current class mean, then the class mean update.
    pub fn fit_sample(&mut self, x: &[f64], label: usize) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "SLDA expects dim {}, got {}",
                self.dim,
                x.len()
            )));
        }
        if label >= self.n_classes {
            return Err(Error::Label {
                label,
                n_classes: self.n_classes,
                index: 0,
            });
        }
        let d = self.dim;
        let diff: Vec<f64> = x.iter().zip(self.mean(label)).map(|(a, m)| a - m).collect();
        let t = self.total as f64;
        let scale = t / (t + 1.0);
        for i in 0..d {
            let row = &mut self.covariance[i * d..(i + 1) * d];
            for (j, c) in row.iter_mut().enumerate() {
                *c = (t * *c + scale * diff[i] * diff[j]) / (t + 1.0);
            }
        }
        let n = self.counts[label] as f64;
        for (m, dv) in self.means[label * d..(label + 1) * d].iter_mut().zip(&diff) {
            *m += dv / (n + 1.0);
        }
        self.counts[label] += 1;
        self.total += 1;
        Ok(())
    }

    /// Linear discriminant `(w_c, b_c)` for every class with
    /// `w_c = Lambda mu_c`, `b_c = -1/2 mu_c . Lambda mu_c`.
    pub fn discriminants(&self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if self.total == 0 {
            return Err(Error::State("SLDA has not seen any sample".into()));
        }
        let d = self.dim;
        let eps = self.shrinkage;
        let sigma = DMatrix::from_fn(d, d, |i, j| {
            (1.0 - eps) * self.covariance[i * d + j] + if i == j { eps } else { 0.0 }
        });
        let chol = sigma
            .cholesky()
            .ok_or_else(|| Error::Numeric {
                location: "SLDA shrunken covariance (not positive definite)".into(),
                value: f64::NAN,
            })?;
        let mut ws = Vec::with_capacity(self.n_classes);
        let mut bs = Vec::with_capacity(self.n_classes);
        for c in 0..self.n_classes {
            let mu = DVector::from_column_slice(self.mean(c));
            let w = chol.solve(&mu);
            bs.push(-0.5 * mu.dot(&w));
            ws.push(w.iter().copied().collect());
        }
        Ok((ws, bs))
    }

    /// Class scores for every row of `x`; classes never seen score `-inf`.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim {
            return Err(Error::Shape(format!(
                "SLDA expects dim {}, got {}",
                self.dim,
                x.cols()
            )));
        }
        let (ws, bs) = self.discriminants()?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (row, o) in x.iter_rows().zip(out.as_mut_slice().chunks_exact_mut(self.n_classes)) {
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = if self.counts[c] == 0 {
                    f64::NEG_INFINITY
                } else {
                    bs[c] + ws[c].iter().zip(row).map(|(w, v)| w * v).sum::<f64>()
                };
            }
        }
        Ok(out)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.predict(&m)?.into_vec())
    }
}
