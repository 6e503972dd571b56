//! Distillation from a frozen copy of the previous model.

use crate::error::{Error, Result};
use crate::nn::{cce_loss_and_grad, log_sum_exp, Matrix};

/// Cross-entropy on the labels plus `lambda * T^2 * KL(p_teacher || p_student)`
/// on temperature-softened softmaxes, averaged over the batch. Returns the
/// loss and its gradient with respect to the student logits.
pub fn lwf_loss(
    student: &Matrix,
    teacher: &Matrix,
    labels: &[usize],
    lambda: f64,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    if student.rows() != teacher.rows() || student.cols() != teacher.cols() {
        return Err(Error::Shape(format!(
            "student logits {}x{} vs teacher logits {}x{}",
            student.rows(),
            student.cols(),
            teacher.rows(),
            teacher.cols()
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "distillation temperature must be positive, got {temperature}"
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    let (ce, mut grad) = cce_loss_and_grad(student, labels)?;
    if lambda == 0.0 {
        return Ok((ce, grad));
    }
    let n = student.rows() as f64;
    let c = student.cols();
    let mut kl_sum = 0.0;
    let mut zs = vec![0.0; c];
    let mut zt = vec![0.0; c];
    for ((s, t), g) in student
        .iter_rows()
        .zip(teacher.iter_rows())
        .zip(grad.as_mut_slice().chunks_exact_mut(c))
    {
        for k in 0..c {
            zs[k] = s[k] / temperature;
            zt[k] = t[k] / temperature;
        }
        let (lse_s, lse_t) = (log_sum_exp(&zs), log_sum_exp(&zt));
        for k in 0..c {
            let log_ps = zs[k] - lse_s;
            let log_pt = zt[k] - lse_t;
            let pt = log_pt.exp();
            if pt > 0.0 {
                kl_sum += pt * (log_pt - log_ps);
            }
            // d/dz_s of T^2 KL = T (p_s - p_t)
            g[k] += lambda * temperature * (log_ps.exp() - pt) / n;
        }
    }
    let kd = lambda * temperature * temperature * kl_sum / n;
    Ok((ce + kd, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn zero_lambda_is_plain_cce() {
        let s = m(2, 3, &[0.3, -1.0, 2.0, 0.0, 0.5, -0.5]);
        let t = m(2, 3, &[1.0, 1.0, -3.0, 2.0, 0.0, 0.0]);
        let (l, g) = lwf_loss(&s, &t, &[2, 0], 0.0, 2.0).unwrap();
        let (lc, gc) = cce_loss_and_grad(&s, &[2, 0]).unwrap();
        assert_eq!(l.to_bits(), lc.to_bits());
        assert_eq!(g, gc);
    }

    #[test]
    fn self_distillation_adds_nothing() {
        let s = m(2, 3, &[0.3, -1.0, 2.0, 0.0, 0.5, -0.5]);
        let (l, g) = lwf_loss(&s, &s, &[1, 1], 5.0, 2.0).unwrap();
        let (lc, gc) = cce_loss_and_grad(&s, &[1, 1]).unwrap();
        assert!((l - lc).abs() < 1e-15);
        for (a, b) in g.as_slice().iter().zip(gc.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_class_reference_value() {
        let s = m(1, 2, &[0.0, 0.0]);
        let t = m(1, 2, &[2.0, 0.0]);
        let (l, _) = lwf_loss(&s, &t, &[0], 1.0, 1.0).unwrap();
        // direct evaluation of KL((e^2, 1)/(e^2 + 1) || (1/2, 1/2))
        let p0 = 2f64.exp() / (2f64.exp() + 1.0);
        let p1 = 1.0 - p0;
        let kl = p0 * (p0 / 0.5).ln() + p1 * (p1 / 0.5).ln();
        assert!((l - (2f64.ln() + kl)).abs() < 1e-14);
        assert!((l - 1.020_96).abs() < 1e-5);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = [0.4, -0.2, 1.3, -0.7, 0.1, 0.9];
        let t = m(2, 3, &[1.0, 0.5, -2.0, 0.3, 0.3, -0.1]);
        let labels = [0, 2];
        let (_, g) = lwf_loss(&m(2, 3, &s), &t, &labels, 3.0, 2.0).unwrap();
        let eps = 1e-6;
        for k in 0..6 {
            let mut p = s;
            p[k] += eps;
            let (lp, _) = lwf_loss(&m(2, 3, &p), &t, &labels, 3.0, 2.0).unwrap();
            p[k] -= 2.0 * eps;
            let (lm, _) = lwf_loss(&m(2, 3, &p), &t, &labels, 3.0, 2.0).unwrap();
            let fd = (lp - lm) / (2.0 * eps);
            assert!((fd - g.as_slice()[k]).abs() < 1e-8, "{k}: {fd} vs {}", g.as_slice()[k]);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let s = m(1, 2, &[0.0, 0.0]);
        let t = m(1, 3, &[0.0, 0.0, 0.0]);
        assert!(matches!(lwf_loss(&s, &t, &[0], 1.0, 2.0), Err(Error::Shape(_))));
    }
}
