//! Detection error rates, summaries over time and Borda ranking over time.
//!
//! Scores are "morphedness": higher means more likely an attack, and a
//! sample is flagged when its score is strictly above the threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection scores of bona fide and attack samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub bona: Vec<f64>,
    pub morph: Vec<f64>,
}

impl ScoreSet {
    pub fn new(bona: Vec<f64>, morph: Vec<f64>) -> Result<Self> {
        if bona.iter().chain(&morph).any(|s| !s.is_finite()) {
            return Err(Error::Metric("scores must be finite".into()));
        }
        Ok(ScoreSet { bona, morph })
    }

    fn require_both(&self) -> Result<()> {
        if self.bona.is_empty() || self.morph.is_empty() {
            return Err(Error::Metric(
                "threshold metrics need both bona fide and attack scores".into(),
            ));
        }
        Ok(())
    }

    /// Candidate thresholds in ascending order: one below every score, each
    /// distinct score, and the midpoints between consecutive distinct scores.
    /// Every achievable (BPCER, APCER) pair is realized by one of them.
    pub fn thresholds(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.bona.iter().chain(&self.morph).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        let mut out = Vec::with_capacity(2 * v.len() + 1);
        if let Some(&lo) = v.first() {
            out.push(lo - 1.0);
        }
        for (i, &s) in v.iter().enumerate() {
            out.push(s);
            if let Some(&next) = v.get(i + 1) {
                let mid = s + (next - s) / 2.0;
                if mid > s && mid < next {
                    out.push(mid);
                }
            }
        }
        out
    }

    /// Error rates at every candidate threshold, via sorted scores.
    pub fn sweep(&self) -> Result<Vec<SweepPoint>> {
        self.require_both()?;
        let mut bona = self.bona.clone();
        let mut morph = self.morph.clone();
        bona.sort_by(f64::total_cmp);
        morph.sort_by(f64::total_cmp);
        let (n, m) = (bona.len(), morph.len());
        let (mut ib, mut im) = (0usize, 0usize);
        let mut out = Vec::new();
        for tau in self.thresholds() {
            // ib / im: number of scores <= tau
            while ib < n && bona[ib] <= tau {
                ib += 1;
            }
            while im < m && morph[im] <= tau {
                im += 1;
            }
            out.push(SweepPoint {
                threshold: tau,
                bpcer: (n - ib) as f64 / n as f64,
                apcer: im as f64 / m as f64,
            });
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub bpcer: f64,
    pub apcer: f64,
}

/// Fraction of bona fide scores strictly above `tau`.
pub fn bpcer(scores: &ScoreSet, tau: f64) -> Result<f64> {
    if scores.bona.is_empty() {
        return Err(Error::Metric("no bona fide scores".into()));
    }
    let above = scores.bona.iter().filter(|&&b| b > tau).count();
    Ok(above as f64 / scores.bona.len() as f64)
}

/// Fraction of attack scores at or below `tau`.
pub fn apcer(scores: &ScoreSet, tau: f64) -> Result<f64> {
    if scores.morph.is_empty() {
        return Err(Error::Metric("no attack scores".into()));
    }
    // (M - #above) / M, the same quantity as 1 - #above / M without the
    // rounding of the subtraction
    let not_above = scores.morph.iter().filter(|&&m| !(m > tau)).count();
    Ok(not_above as f64 / scores.morph.len() as f64)
}

/// Equal error rate operating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
    pub bpcer: f64,
    pub apcer: f64,
}

/// `(BPCER + APCER) / 2` at the threshold minimizing `|BPCER - APCER|`;
/// ties resolve to the lowest threshold.
pub fn eer_point(scores: &ScoreSet) -> Result<EerPoint> {
    let sweep = scores.sweep()?;
    let best = sweep
        .iter()
        .fold(None::<&SweepPoint>, |best, p| match best {
            Some(b) if (b.bpcer - b.apcer).abs() <= (p.bpcer - p.apcer).abs() => Some(b),
            _ => Some(p),
        })
        .expect("sweep is never empty");
    Ok(EerPoint {
        eer: (best.bpcer + best.apcer) / 2.0,
        threshold: best.threshold,
        bpcer: best.bpcer,
        apcer: best.apcer,
    })
}

pub fn eer(scores: &ScoreSet) -> Result<f64> {
    Ok(eer_point(scores)?.eer)
}

fn check_rate(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("APCER bound must lie in (0, 1), got {x}")))
    }
}

/// Lowest BPCER over thresholds whose APCER is at most `x`; 1.0 when none
/// qualifies.
pub fn bpcer_at_apcer(scores: &ScoreSet, x: f64) -> Result<f64> {
    check_rate(x)?;
    Ok(scores
        .sweep()?
        .iter()
        .filter(|p| p.apcer <= x)
        .map(|p| p.bpcer)
        .fold(1.0, f64::min))
}

/// EER plus BPCER at APCER <= 1%: the per-experience MAD summary value.
pub fn mad_point(scores: &ScoreSet) -> Result<f64> {
    Ok(eer(scores)? + bpcer_at_apcer(scores, 0.01)?)
}

/// Trapezoidal area over unit-spaced experiences, divided by the number of
/// experiences `N`. A single value is returned as is.
pub fn auc_over_time(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Metric("no per-experience values".into()));
    }
    if n == 1 {
        return Ok(values[0]);
    }
    Ok(trapezoid(values) / n as f64)
}

/// Same trapezoid divided by `N - 1`, so a constant sequence maps to itself.
pub fn auc_over_time_interval(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Metric("no per-experience values".into()));
    }
    if n == 1 {
        return Ok(values[0]);
    }
    Ok(trapezoid(values) / (n - 1) as f64)
}

fn trapezoid(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum()
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Metric("no predictions".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Metrics of one testing experience.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub experience_index: usize,
    pub eer: Option<f64>,
    pub bpcer_at_10pct: Option<f64>,
    pub bpcer_at_1pct: Option<f64>,
    pub bpcer_at_01pct: Option<f64>,
    pub top1_accuracy: f64,
    pub mad_point: Option<f64>,
}

impl MetricRecord {
    /// Full MAD record from detection scores and class predictions.
    pub fn mad(experience_index: usize, scores: &ScoreSet, accuracy: f64) -> Result<Self> {
        let eer = eer(scores)?;
        let b1 = bpcer_at_apcer(scores, 0.01)?;
        Ok(MetricRecord {
            experience_index,
            eer: Some(eer),
            bpcer_at_10pct: Some(bpcer_at_apcer(scores, 0.1)?),
            bpcer_at_1pct: Some(b1),
            bpcer_at_01pct: Some(bpcer_at_apcer(scores, 0.001)?),
            top1_accuracy: accuracy,
            mad_point: Some(eer + b1),
        })
    }

    pub fn classification(experience_index: usize, accuracy: f64) -> Self {
        MetricRecord {
            experience_index,
            eer: None,
            bpcer_at_10pct: None,
            bpcer_at_1pct: None,
            bpcer_at_01pct: None,
            top1_accuracy: accuracy,
            mad_point: None,
        }
    }
}

/// Ranking values per algorithm (rows) and testing experience (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub algorithms: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl RankingTable {
    pub fn new(algorithms: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let t = RankingTable { algorithms, values };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<usize> {
        if self.values.is_empty() {
            return Err(Error::Shape("ranking table has no algorithms".into()));
        }
        if self.values.len() != self.algorithms.len() {
            return Err(Error::Shape(format!(
                "{} names for {} rows",
                self.algorithms.len(),
                self.values.len()
            )));
        }
        let n = self.values[0].len();
        if n == 0 || self.values.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("ranking table must be rectangular and non-empty".into()));
        }
        Ok(n)
    }
}

/// Accumulated Borda points per algorithm: at each experience the algorithm
/// ranked `i` (1 = best) earns `|A| - i`. Ties keep registration order.
pub fn brot_points(table: &RankingTable, lower_is_better: bool) -> Result<Vec<u64>> {
    let n = table.validate()?;
    let a = table.values.len();
    let mut points = vec![0u64; a];
    let mut idx: Vec<usize> = Vec::with_capacity(a);
    for t in 0..n {
        idx.clear();
        idx.extend(0..a);
        // stable sort: equal values keep registration order
        idx.sort_by(|&x, &y| {
            let (vx, vy) = (table.values[x][t], table.values[y][t]);
            let ord = if lower_is_better {
                vx.total_cmp(&vy)
            } else {
                vy.total_cmp(&vx)
            };
            // NaN ranks last in either direction
            match (vx.is_nan(), vy.is_nan()) {
                (true, false) => std::cmp::Ordering::Greater,
                (false, true) => std::cmp::Ordering::Less,
                _ => ord,
            }
        });
        for (rank0, &alg) in idx.iter().enumerate() {
            points[alg] += (a - 1 - rank0) as u64;
        }
    }
    Ok(points)
}

/// Borda points normalized by `|A| * N`.
pub fn brot(table: &RankingTable, lower_is_better: bool) -> Result<Vec<f64>> {
    let n = table.validate()?;
    let a = table.values.len();
    let denom = (a * n) as f64;
    Ok(brot_points(table, lower_is_better)?
        .into_iter()
        .map(|p| p as f64 / denom)
        .collect())
}
