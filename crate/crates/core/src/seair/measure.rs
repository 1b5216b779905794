//! Discretized-normal reporting model.
//!
//! Reports `Y` given a true case increment `C` are a normal with mean `C`
//! and variance `C + τ²C²`, rounded to the nearest integer, with the mass
//! below one half assigned to zero.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::stats::{log_diff_exp, log_std_normal_cdf};

/// `C + τ²C²`.
#[inline]
pub fn measurement_variance(c: f64, tau: f64) -> f64 {
    c + tau * tau * c * c
}

/// log P(Y = y | C) for integer `y ≥ 0`. `C = 0` is a point mass at zero.
pub fn dmeasure(y: f64, c: f64, tau: f64) -> f64 {
    debug_assert!(tau >= 0.0);
    if y < 0.0 {
        return f64::NEG_INFINITY;
    }
    if c <= 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let sd = measurement_variance(c, tau).sqrt();
    let hi = (y + 0.5 - c) / sd;
    if y == 0.0 {
        return log_std_normal_cdf(hi);
    }
    let lo = (y - 0.5 - c) / sd;
    if lo > 0.0 {
        // both ends in the upper tail: difference of survival functions
        log_diff_exp(log_std_normal_cdf(-lo), log_std_normal_cdf(-hi))
    } else {
        log_diff_exp(log_std_normal_cdf(hi), log_std_normal_cdf(lo))
    }
}

/// Draws a report: normal(C, V), rounded, negatives clamped to zero.
pub fn rmeasure<R: Rng + ?Sized>(c: f64, tau: f64, rng: &mut R) -> f64 {
    if c <= 0.0 {
        return 0.0;
    }
    let z: f64 = StandardNormal.sample(rng);
    (c + measurement_variance(c, tau).sqrt() * z).round().max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn point_mass_at_zero_increment() {
        assert_eq!(dmeasure(0.0, 0.0, 0.32), 0.0);
        assert_eq!(dmeasure(3.0, 0.0, 0.32), f64::NEG_INFINITY);
    }

    #[test]
    fn standard_normal_cdf_oracle() {
        // log(Φ(0.05) − Φ(−0.05)) from an arbitrary-precision CDF
        assert_abs_diff_eq!(dmeasure(100.0, 100.0, 0.0), -3.221_940_223_426_452_7, epsilon = 1e-9);
        // lower-tail y = 0 term: log Φ((0.5 − 25)/sqrt(25 + 0.1024·625))
        assert_abs_diff_eq!(dmeasure(0.0, 25.0, 0.32), -5.359_731_747_402_747, epsilon = 1e-9);
    }

    #[test]
    fn normalizes() {
        for &c in &[0.0, 1.0, 10.0, 25.0, 100.0] {
            for &tau in &[0.0, 0.32, 1.0] {
                let total: f64 = (0..200_000).map(|y| dmeasure(y as f64, c, tau).exp()).sum();
                assert!((total - 1.0).abs() < 1e-9, "c={c} tau={tau} total={total}");
            }
        }
    }

    #[test]
    fn far_tail_is_finite() {
        let v = dmeasure(400.0, 10.0, 0.0);
        assert!(v.is_finite() && v < -5000.0, "{v}");
    }
}
