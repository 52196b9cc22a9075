use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::util::sample_variance;

/// Outcome of a two-tailed variance-ratio test between two residual vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTestResult {
    /// `var(a) / var(b)`.
    pub ratio: f64,
    pub p_value: f64,
    /// 1: `a` has significantly smaller residual variance, −1: larger, 0: neither.
    pub verdict: i8,
}

/// Upper critical value of F(d1, d2) at cumulative probability `q`.
pub fn f_critical(d1: f64, d2: f64, q: f64) -> Result<f64> {
    let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::InvalidInput(format!("F({d1}, {d2}): {e}")))?;
    Ok(dist.inverse_cdf(q))
}

pub fn f_test_detail(a: &[f64], b: &[f64], alpha: f64) -> Result<FTestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "F-test needs residuals over the same entries ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::InvalidInput("F-test needs at least 3 residuals".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1)")));
    }
    let (va, vb) = (sample_variance(a), sample_variance(b));
    if !va.is_finite() || !vb.is_finite() {
        return Err(Error::InvalidInput("F-test: non-finite residuals".into()));
    }
    let ratio = va / vb;
    if va == vb {
        return Ok(FTestResult { ratio: 1.0, p_value: 1.0, verdict: 0 });
    }
    let df = (a.len() - 1) as f64;
    let dist = FisherSnedecor::new(df, df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    // the larger variance goes on top so that swapping arguments is exact
    let big = va.max(vb) / va.min(vb);
    let p_value = if big.is_finite() { (2.0 * dist.sf(big)).min(1.0) } else { 0.0 };
    let verdict = match (p_value < alpha, va < vb) {
        (false, _) => 0,
        (true, true) => 1,
        (true, false) => -1,
    };
    Ok(FTestResult { ratio, p_value, verdict })
}

/// Verdict of [`f_test_detail`].
pub fn f_test(a: &[f64], b: &[f64], alpha: f64) -> Result<i8> {
    Ok(f_test_detail(a, b, alpha)?.verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_residuals(n: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let sd = sample_variance(&raw).sqrt();
        raw.iter().map(|v| v / sd).collect()
    }

    #[test]
    fn identical_residuals() {
        let a = unit_residuals(50);
        assert_eq!(f_test(&a, &a, 0.05).unwrap(), 0);
    }

    #[test]
    fn ratio_two_at_121_is_significant() {
        let crit = f_critical(120.0, 120.0, 0.975).unwrap();
        assert!((crit - 1.43).abs() < 0.01, "{crit}");
        let a = unit_residuals(121);
        let b: Vec<f64> = a.iter().map(|v| v * 2f64.sqrt()).collect();
        assert_eq!(f_test(&a, &b, 0.05).unwrap(), 1);
        assert_eq!(f_test(&b, &a, 0.05).unwrap(), -1);
    }

    #[test]
    fn ratio_one_point_one_at_20_is_not() {
        let a = unit_residuals(20);
        let b: Vec<f64> = a.iter().map(|v| v * 1.1f64.sqrt()).collect();
        let r = f_test_detail(&a, &b, 0.05).unwrap();
        assert!((r.ratio - 1.0 / 1.1).abs() < 1e-12);
        assert_eq!(r.verdict, 0);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(f_test(&[1.0, 2.0, 3.0], &[1.0, 2.0], 0.05).is_err());
    }
}
