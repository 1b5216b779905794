//! Small numerical helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// log of the standard normal CDF, accurate far into the lower tail.
pub fn log_std_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        std_normal_cdf(z).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let z2 = z * z;
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) / z2;
            series += term;
        }
        -0.5 * z2 - LN_SQRT_2PI - (-z).ln() + series.ln()
    }
}

/// `log(exp(a) - exp(b))` for `a >= b`.
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a <= b {
        return f64::NEG_INFINITY;
    }
    a + (-(b - a).exp()).ln_1p()
}

/// log of the normal density.
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

/// `log(mean(exp(x)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + (s / xs.len() as f64).ln()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Quantile of the chi-squared distribution with one degree of freedom.
pub fn chi2_1_quantile(p: f64) -> f64 {
    let z = Normal::standard().inverse_cdf(0.5 + 0.5 * p);
    z * z
}

/// Maximizes `f` on `[lo, hi]`: a coarse grid of `coarse` points, then
/// golden-section refinement inside the bracket around the best grid point.
/// Returns `(argmax, max)`.
pub fn maximize_scalar<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, coarse: usize) -> (f64, f64) {
    let coarse = coarse.max(3);
    let h = (hi - lo) / (coarse - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..coarse {
        let x = if i == coarse - 1 { hi } else { lo + h * i as f64 };
        let v = f(x);
        if v > best.1 || best.1.is_nan() {
            best = (x, v);
            best_i = i;
        }
    }
    let mut a = lo + h * best_i.saturating_sub(1) as f64;
    let mut b = (lo + h * (best_i + 1) as f64).min(hi);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() <= 1e-10 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximize_scalar_finds_interior_and_edge() {
        let (x, v) = maximize_scalar(|x| -(x - 1.3) * (x - 1.3), -5.0, 5.0, 11);
        assert!((x - 1.3).abs() < 1e-6 && v > -1e-12);
        let (x, _) = maximize_scalar(|x| x, 0.0, 2.0, 5);
        assert_eq!(x, 2.0);
    }
    use approx::assert_relative_eq;

    #[test]
    fn log_cdf_branches_join() {
        let a = std_normal_cdf(-29.999).ln();
        let b = log_std_normal_cdf(-30.001);
        assert!((a - b).abs() < 0.1);
        assert_relative_eq!(log_std_normal_cdf(-40.0), -804.608_442_013_754, max_relative = 1e-9);
    }

    #[test]
    fn chi2_cutoff() {
        assert_relative_eq!(chi2_1_quantile(0.95), 3.841_458_820_694_124, epsilon = 1e-9);
    }

    #[test]
    fn quantile_type7() {
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 1.5);
    }

    #[test]
    fn log_mean_exp_handles_neg_inf() {
        assert_eq!(log_mean_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_relative_eq!(log_mean_exp(&[0.0, f64::NEG_INFINITY]), 0.5f64.ln());
    }
}
