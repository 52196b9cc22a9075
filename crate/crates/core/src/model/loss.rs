//! Siamese ranking objective: a sigmoid over the score difference and binary
//! cross-entropy against the rank label.

/// Logistic function, evaluated without overflow for any finite input.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Probability that pairing 1 outranks pairing 2, `sigmoid(q1 − q2)`.
#[inline]
pub fn rank_probability(q1: f64, q2: f64) -> f64 {
    sigmoid(q1 - q2)
}

/// `−(r·ln p + (1 − r)·ln(1 − p))`.
pub fn bce_loss(p: f64, r: u8) -> f64 {
    debug_assert!(r <= 1);
    if r == 1 {
        -p.ln()
    } else {
        -(-p).ln_1p()
    }
}

/// The same loss computed from the logit `q1 − q2`: `softplus(x) − r·x`.
#[inline]
pub fn bce_with_logits(logit: f64, r: u8) -> f64 {
    softplus(logit) - r as f64 * logit
}

/// d/dx of [`bce_with_logits`]: `sigmoid(x) − r`.
#[inline]
pub fn bce_logit_grad(logit: f64, r: u8) -> f64 {
    sigmoid(logit) - r as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert_eq!(rank_probability(1.5, 1.5), 0.5);
        assert!((rank_probability(3f64.ln(), 0.0) - 0.75).abs() < 1e-12);
        assert!((bce_loss(0.5, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_with_logits(0.0, 1) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(bce_logit_grad(0.0, 1), -0.5);
    }

    #[test]
    fn large_differences_do_not_overflow() {
        let p = rank_probability(50.0, 0.0);
        assert!(p.is_finite() && 1.0 - p < 1e-20);
        let p = rank_probability(0.0, 1e3);
        assert!(p > 0.0 || p == 0.0);
        assert!(p.is_finite());
        assert!(bce_with_logits(1e3, 1).abs() < 1e-12);
        assert!((bce_with_logits(-1e3, 1) - 1e3).abs() < 1e-9);
        assert!((bce_with_logits(1e3, 0) - 1e3).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn probability_is_antisymmetric(a in -500.0f64..500.0, b in -500.0f64..500.0) {
            prop_assert!((rank_probability(a, b) - (1.0 - rank_probability(b, a))).abs() <= 2.0 * f64::EPSILON);
        }

        #[test]
        fn fused_matches_plain_form(x in -15.0f64..15.0, r in 0u8..=1) {
            let plain = bce_loss(sigmoid(x), r);
            prop_assert!((plain - bce_with_logits(x, r)).abs() < 1e-9 * (1.0 + plain));
            prop_assert!(bce_with_logits(x, r) >= 0.0);
        }
    }
}
