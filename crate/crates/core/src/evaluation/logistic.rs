//! Four-parameter logistic mapping of objective scores onto the subjective
//! scale, fitted by Levenberg–Marquardt.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;

const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    Logistic,
    /// `subj ≈ params[0]·pred + params[3]`; the middle parameters are zero.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub kind: FitKind,
    pub params: [f64; 4],
    /// `subj − fitted`, in input order.
    pub residuals: Vec<f64>,
    pub sse: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostic: Option<String>,
}

/// `β1·(1/2 − 1/(1 + exp(β2·(x − β3)))) + β4`
pub fn logistic4(b: &[f64; 4], x: f64) -> f64 {
    b[0] * (sigmoid(b[1] * (x - b[2])) - 0.5) + b[3]
}

impl LogisticFit {
    pub fn predict(&self, x: f64) -> f64 {
        match self.kind {
            FitKind::Logistic => logistic4(&self.params, x),
            FitKind::Linear => self.params[0] * x + self.params[3],
        }
    }
}

fn sse(b: &[f64; 4], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (yi - logistic4(b, xi)).powi(2)).sum()
}

/// Solves a 4×4 system by Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * out[k]).sum();
        out[row] = (rhs[row] - s) / a[row][row];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn levenberg_marquardt(x: &[f64], y: &[f64], init: [f64; 4]) -> ([f64; 4], usize, bool) {
    let mut b = init;
    let mut cost = sse(&b, x, y);
    let mut lambda = 1e-3;
    for iter in 1..=MAX_ITER {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&xi, &yi) in x.iter().zip(y) {
            let s = sigmoid(b[1] * (xi - b[2]));
            let ds = s * (1.0 - s);
            let j = [s - 0.5, b[0] * ds * (xi - b[2]), -b[0] * ds * b[1], 1.0];
            let r = yi - logistic4(&b, xi);
            for p in 0..4 {
                jtr[p] += j[p] * r;
                for q in 0..4 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < 1e-14 * (1.0 + cost) {
            return (b, iter, true);
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for (p, row) in a.iter_mut().enumerate() {
                row[p] += lambda * jtj[p][p].max(1e-12);
            }
            if let Some(step) = solve4(a, jtr) {
                let cand = [b[0] + step[0], b[1] + step[1], b[2] + step[2], b[3] + step[3]];
                let c = sse(&cand, x, y);
                if c.is_finite() && c <= cost {
                    let rel = (cost - c) / cost.max(1e-300);
                    b = cand;
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 || cost < 1e-24 {
                        return (b, iter, true);
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            // no descent direction left at any damping
            return (b, iter, true);
        }
    }
    (b, MAX_ITER, false)
}

fn linear_fit(x: &[f64], y: &[f64]) -> [f64; 4] {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    [slope, 0.0, 0.0, my - slope * mx]
}

/// Fits `subj ≈ logistic4(pred)`.
///
/// Starts from β1 = range(subj), β2 = ±1/std(pred) with the sign of the
/// linear correlation, β3 = mean(pred), β4 = mean(subj). The logistic's
/// linear limit (β2 → 0) is also fitted in closed form and returned instead
/// when its squared error is lower, which is also the fallback if the
/// iteration cap is hit.
pub fn logistic_fit(pred: &[f64], subj: &[f64]) -> Result<LogisticFit> {
    if pred.len() != subj.len() {
        return Err(Error::InvalidInput(format!(
            "logistic fit: {} predictions vs {} subjective scores",
            pred.len(),
            subj.len()
        )));
    }
    if pred.len() < 5 {
        return Err(Error::InvalidInput(format!("logistic fit needs at least 5 points, got {}", pred.len())));
    }
    if pred.iter().chain(subj).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("logistic fit: non-finite input".into()));
    }
    let (lo, hi) = subj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if lo == hi {
        return Err(Error::InvalidInput("logistic fit: subjective scores are constant".into()));
    }
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let ms = subj.iter().sum::<f64>() / n;
    let sp = (pred.iter().map(|v| (v - mp).powi(2)).sum::<f64>() / n).sqrt();
    let cov: f64 = pred.iter().zip(subj).map(|(a, b)| (a - mp) * (b - ms)).sum();

    let lin = linear_fit(pred, subj);
    let lin_res: Vec<f64> = pred.iter().zip(subj).map(|(&x, &y)| y - (lin[0] * x + lin[3])).collect();
    let lin_sse: f64 = lin_res.iter().map(|r| r * r).sum();
    let linear = |diagnostic: Option<String>, iterations| LogisticFit {
        kind: FitKind::Linear,
        params: lin,
        residuals: lin_res.clone(),
        sse: lin_sse,
        iterations,
        converged: diagnostic.is_none(),
        diagnostic,
    };
    if sp == 0.0 {
        return Ok(linear(Some("predictions are constant".into()), 0));
    }

    let sign = if cov < 0.0 { -1.0 } else { 1.0 };
    let init = [hi - lo, sign / sp, mp, ms];
    let (b, iterations, converged) = levenberg_marquardt(pred, subj, init);
    let cost = sse(&b, pred, subj);
    if !converged || !cost.is_finite() {
        let msg = format!("logistic fit did not converge in {MAX_ITER} iterations; using linear fit");
        log::warn!("{msg}");
        return Ok(linear(Some(msg), iterations));
    }
    if lin_sse < cost {
        return Ok(linear(None, iterations));
    }
    Ok(LogisticFit {
        kind: FitKind::Logistic,
        params: b,
        residuals: pred.iter().zip(subj).map(|(&x, &y)| y - logistic4(&b, x)).collect(),
        sse: cost,
        iterations,
        converged,
        diagnostic: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(r: &[f64]) -> f64 {
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_leaves_no_residual() {
        let subj: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin() * 10.0 + 50.0).collect();
        let fit = logistic_fit(&subj, &subj).unwrap();
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-8), "{fit:?}");
    }

    #[test]
    fn reversed_polarity_fits_equally_well() {
        let pred: Vec<f64> = (0..30).map(|i| i as f64 / 3.0).collect();
        let subj: Vec<f64> = pred.iter().map(|&x| 40.0 / (1.0 + (-(x - 5.0)).exp()) + 0.3 * (x * 7.0).sin()).collect();
        let neg: Vec<f64> = pred.iter().map(|x| -x).collect();
        let a = logistic_fit(&pred, &subj).unwrap();
        let b = logistic_fit(&neg, &subj).unwrap();
        assert_eq!(a.kind, FitKind::Logistic);
        assert!((norm(&a.residuals) - norm(&b.residuals)).abs() < 1e-6 * (1.0 + norm(&a.residuals)));
        assert!(a.params[1].signum() == -b.params[1].signum());
    }

    #[test]
    fn recovers_a_logistic() {
        let truth = [30.0, 0.8, 2.0, 10.0];
        let pred: Vec<f64> = (0..40).map(|i| i as f64 / 4.0 - 3.0).collect();
        let subj: Vec<f64> = pred.iter().map(|&x| logistic4(&truth, x)).collect();
        let fit = logistic_fit(&pred, &subj).unwrap();
        assert!(fit.sse < 1e-12, "{fit:?}");
    }

    #[test]
    fn constant_subjective_scores_are_rejected() {
        let pred = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(logistic_fit(&pred, &[3.0; 5]).is_err());
        assert!(logistic_fit(&pred[..4], &[1.0, 2.0, 3.0, 4.0]).is_err());
    }
}
