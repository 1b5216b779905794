//! Negative-binomial benchmark models for count panels.
//!
//! The IID model gives each unit its own mean and shares one scale `s`; the
//! AR model adds `phi` times the previous count to the mean. Both use the
//! moment parameterization: variance = mean + mean^2 / s.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::pomp::ObservationPanel;
use crate::stats::maximize_scalar;

/// Lower bound on AR intercepts during optimization.
pub const AR_MU_FLOOR: f64 = 1e-8;

const LOG_S_RANGE: (f64, f64) = (-9.2, 18.5); // about 1e-4 .. 1e8

/// log P(Y = y) for a negative binomial with the given mean and scale `s`.
///
/// `s = +inf` is the Poisson limit; `mean = 0` is a point mass at zero.
pub fn negbin_logpmf(y: f64, mean: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain {
            name: "s".into(),
            value: s,
            transform: "negative binomial scale",
        });
    }
    if !(y >= 0.0 && y.fract() == 0.0) {
        return Err(invalid(format!("negative binomial count must be a non-negative integer, got {y}")));
    }
    if !(mean >= 0.0 && mean.is_finite()) {
        return Err(invalid(format!("negative binomial mean must be finite and non-negative, got {mean}")));
    }
    Ok(logpmf_unchecked(y, mean, s, ln_gamma(y + 1.0)))
}

/// `lgy1` is `ln Γ(y + 1)`.
fn logpmf_unchecked(y: f64, mean: f64, s: f64, lgy1: f64) -> f64 {
    if mean == 0.0 {
        return if y == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if s.is_infinite() {
        return y * mean.ln() - mean - lgy1;
    }
    // ln Γ(y + s) − ln Γ(s), summed directly for small y (exact as s grows).
    let lg_ratio = if y <= 64.0 {
        (0..y as u32).map(|i| (s + i as f64).ln()).sum()
    } else {
        ln_gamma(y + s) - ln_gamma(s)
    };
    let tail = if y == 0.0 { 0.0 } else { y * (mean.ln() - (s + mean).ln()) };
    lg_ratio - lgy1 - s * (mean / s).ln_1p() + tail
}

/// Gamma-Poisson mixture sampler with the same parameterization.
pub fn negbin_sample<R: Rng + ?Sized>(mean: f64, s: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let lambda = if s.is_infinite() {
        mean
    } else {
        Gamma::new(s, mean / s).expect("positive shape and scale").sample(rng)
    };
    if lambda <= 0.0 {
        0.0
    } else {
        Poisson::new(lambda).expect("positive rate").sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegBinIidFit {
    pub mu: Vec<f64>,
    /// `+inf` when every count is zero.
    pub s: f64,
    pub loglik: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegBinArFit {
    pub mu: Vec<f64>,
    pub phi: f64,
    pub s: f64,
    pub loglik: f64,
    pub df: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArOptions {
    /// Hold `phi` at this value instead of estimating it.
    pub fixed_phi: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
    pub exec: Execution,
}

impl Default for ArOptions {
    fn default() -> Self {
        Self {
            fixed_phi: None,
            max_iter: 200,
            tol: 1e-8,
            exec: Execution::default(),
        }
    }
}

/// Observed counts of one unit with their previous value (0 when the
/// previous count is missing or before the first time).
struct UnitSeries {
    y: Vec<f64>,
    prev: Vec<f64>,
    lgy1: Vec<f64>,
}

fn unit_series(data: &ObservationPanel) -> Result<Vec<UnitSeries>> {
    data.rows()
        .enumerate()
        .map(|(u, row)| {
            let mut out = UnitSeries {
                y: Vec::new(),
                prev: Vec::new(),
                lgy1: Vec::new(),
            };
            for (n, y) in row.iter().enumerate() {
                let Some(y) = *y else { continue };
                if !(y >= 0.0 && y.fract() == 0.0) {
                    return Err(invalid(format!("unit {u}, time {n}: count {y} is not a non-negative integer")));
                }
                out.y.push(y);
                out.prev.push(if n == 0 { 0.0 } else { row[n - 1].unwrap_or(0.0) });
                out.lgy1.push(ln_gamma(y + 1.0));
            }
            if out.y.is_empty() {
                return Err(invalid(format!("unit {u} has no observations")));
            }
            Ok(out)
        })
        .collect()
}

fn unit_loglik(series: &UnitSeries, mu: f64, phi: f64, s: f64) -> f64 {
    series
        .y
        .iter()
        .zip(&series.prev)
        .zip(&series.lgy1)
        .map(|((&y, &prev), &lg)| logpmf_unchecked(y, mu + phi * prev, s, lg))
        .sum()
}

fn total_loglik(series: &[UnitSeries], mu: &[f64], phi: f64, s: f64) -> f64 {
    series.iter().zip(mu).map(|(ser, &m)| unit_loglik(ser, m, phi, s)).sum()
}

fn best_log_s<F: Fn(f64) -> f64>(f: F) -> (f64, f64) {
    let (x, v) = maximize_scalar(|ls| f(ls.exp()), LOG_S_RANGE.0, LOG_S_RANGE.1, 56);
    (x.exp(), v)
}

/// IID negative-binomial fit: per-unit sample means and a shared scale.
pub fn fit_iid(data: &ObservationPanel) -> Result<NegBinIidFit> {
    let series = unit_series(data)?;
    let mu: Vec<f64> = series
        .iter()
        .map(|s| s.y.iter().sum::<f64>() / s.y.len() as f64)
        .collect();
    let df = series.len() + 1;
    if mu.iter().all(|&m| m == 0.0) {
        return Ok(NegBinIidFit {
            mu,
            s: f64::INFINITY,
            loglik: 0.0,
            df,
        });
    }
    let (s, loglik) = best_log_s(|s| total_loglik(&series, &mu, 0.0, s));
    Ok(NegBinIidFit { mu, s, loglik, df })
}

/// AR negative-binomial fit with default options.
pub fn fit_ar(data: &ObservationPanel) -> Result<NegBinArFit> {
    fit_ar_with(data, &ArOptions::default())
}

/// Coordinate ascent over per-unit intercepts, `phi` and `s`, started from the IID fit.
///
/// Units whose counts are all zero keep intercept 0. Each coordinate move is
/// accepted only if it does not lower the log-likelihood.
pub fn fit_ar_with(data: &ObservationPanel, opts: &ArOptions) -> Result<NegBinArFit> {
    if data.n_times() < 2 {
        return Err(invalid("AR benchmark needs at least 2 observation times"));
    }
    if let Some(phi) = opts.fixed_phi {
        if !(phi >= 0.0 && phi.is_finite()) {
            return Err(invalid(format!("fixed phi must be finite and non-negative, got {phi}")));
        }
    }
    let series = unit_series(data)?;
    let iid = fit_iid(data)?;
    let df = series.len() + 2;
    let mut mu = iid.mu.clone();
    let mut phi = opts.fixed_phi.unwrap_or(0.0);
    let mut s = if iid.s.is_finite() { iid.s } else { LOG_S_RANGE.1.exp() };
    let all_zero: Vec<bool> = series.iter().map(|ser| ser.y.iter().all(|&y| y == 0.0)).collect();
    if all_zero.iter().all(|&z| z) {
        return Ok(NegBinArFit {
            mu,
            phi,
            s: f64::INFINITY,
            loglik: 0.0,
            df,
            iterations: 0,
            converged: true,
        });
    }
    let mut ll = total_loglik(&series, &mu, phi, s);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let before = ll;

        let updates = map_indexed(opts.exec, series.len(), |u| {
            if all_zero[u] {
                return mu[u];
            }
            let ser = &series[u];
            let current = unit_loglik(ser, mu[u], phi, s);
            let upper = ser.y.iter().cloned().fold(0.0, f64::max).max(1.0).ln() + 1.0;
            let (lm, v) = maximize_scalar(|lm| unit_loglik(ser, lm.exp(), phi, s), AR_MU_FLOOR.ln(), upper, 30);
            if v > current {
                lm.exp()
            } else {
                mu[u]
            }
        });
        mu = updates;
        ll = total_loglik(&series, &mu, phi, s);

        if opts.fixed_phi.is_none() {
            let phi_hi = (2.0 * phi).max(2.0);
            let (p, v) = maximize_scalar(|p| total_loglik(&series, &mu, p, s), 0.0, phi_hi, 41);
            if v > ll {
                phi = p;
                ll = v;
            }
        }

        let (s_new, v) = best_log_s(|x| total_loglik(&series, &mu, phi, x));
        if v > ll {
            s = s_new;
            ll = v;
        }

        if ll - before < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("AR benchmark fit stopped after {iterations} iterations without converging");
    }
    Ok(NegBinArFit {
        mu,
        phi,
        s,
        loglik: ll,
        df,
        iterations,
        converged,
    })
}

/// Either benchmark fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum BenchmarkFit {
    Iid(NegBinIidFit),
    Ar(NegBinArFit),
}

impl BenchmarkFit {
    pub fn label(&self) -> &'static str {
        match self {
            BenchmarkFit::Iid(_) => "iid",
            BenchmarkFit::Ar(_) => "ar",
        }
    }

    pub fn loglik(&self) -> f64 {
        match self {
            BenchmarkFit::Iid(f) => f.loglik,
            BenchmarkFit::Ar(f) => f.loglik,
        }
    }

    pub fn df(&self) -> usize {
        match self {
            BenchmarkFit::Iid(f) => f.df,
            BenchmarkFit::Ar(f) => f.df,
        }
    }

    fn parts(&self) -> (&[f64], f64, f64) {
        match self {
            BenchmarkFit::Iid(f) => (&f.mu, 0.0, f.s),
            BenchmarkFit::Ar(f) => (&f.mu, f.phi, f.s),
        }
    }
}

/// Per-observation conditional log-likelihoods, `U × N`; missing cells are 0.
pub fn conditional_logliks(fit: &BenchmarkFit, data: &ObservationPanel) -> Result<Vec<Vec<f64>>> {
    let (mu, phi, s) = fit.parts();
    if mu.len() != data.n_units() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} units", mu.len()),
            found: data.n_units().to_string(),
        });
    }
    data.rows()
        .zip(mu)
        .map(|(row, &m)| {
            row.iter()
                .enumerate()
                .map(|(n, y)| match *y {
                    None => Ok(0.0),
                    Some(y) => {
                        let prev = if n == 0 { 0.0 } else { row[n - 1].unwrap_or(0.0) };
                        negbin_logpmf(y, m + phi * prev, s)
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomp::TimeGrid;
    use crate::rng::{stream, Purpose, StreamKey};
    use proptest::prelude::*;

    fn panel(rows: Vec<Vec<f64>>) -> ObservationPanel {
        let n = rows[0].len();
        let rows = rows.into_iter().map(|r| r.into_iter().map(Some).collect()).collect();
        ObservationPanel::counts(rows, TimeGrid::daily(0.0, n, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn geometric_special_case() {
        assert!((negbin_logpmf(0.0, 1.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        assert!((negbin_logpmf(1.0, 1.0, 1.0).unwrap() - 0.25f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn high_precision_value() {
        // mpmath, 50 digits, from the gamma-function formula.
        let v = negbin_logpmf(5.0, 3.7, 2.2).unwrap();
        assert!((v - -2.430977765196108).abs() < 1e-12, "{v}");
        let big = negbin_logpmf(250.0, 180.0, 3.5).unwrap();
        assert!((big - -6.052425999765784).abs() < 1e-9, "{big}");
    }

    #[test]
    fn errors_and_edges() {
        assert!(negbin_logpmf(1.0, 1.0, 0.0).is_err());
        assert!(negbin_logpmf(1.0, 1.0, -2.0).is_err());
        assert!(negbin_logpmf(1.5, 1.0, 1.0).is_err());
        assert_eq!(negbin_logpmf(0.0, 0.0, 3.0).unwrap(), 0.0);
        assert_eq!(negbin_logpmf(2.0, 0.0, 3.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn normalizes() {
        for &m in &[0.3, 1.0, 7.5, 40.0, 100.0] {
            for &s in &[0.5, 2.0, 30.0, 1e4] {
                let total: f64 = (0..20_000).map(|y| negbin_logpmf(y as f64, m, s).unwrap().exp()).sum();
                assert!((total - 1.0).abs() < 1e-8, "m={m} s={s} total={total}");
            }
        }
    }

    #[test]
    fn poisson_limit() {
        // The true gap grows like ((y - m)^2 - y) / 2s, so stay near the mean.
        for y in 0..=40 {
            let y = y as f64;
            let pois = y * 12.0f64.ln() - 12.0 - ln_gamma(y + 1.0);
            let nb = negbin_logpmf(y, 12.0, 1e8).unwrap();
            assert!((nb - pois).abs() < 1e-5, "y={y}");
            assert_eq!(negbin_logpmf(y, 12.0, f64::INFINITY).unwrap(), pois);
        }
    }

    #[test]
    fn sampler_moments() {
        let (m, s) = (6.0, 1.5);
        let mut rng = stream(3, StreamKey::new(0, 0, 0, Purpose::Replicate));
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| negbin_sample(m, s, &mut rng)).collect();
        let mean = crate::stats::mean(&draws);
        let var = crate::stats::variance(&draws);
        let target = m + m * m / s;
        assert!((mean - m).abs() < 3.0 * (target / n as f64).sqrt());
        // sd of the sample variance from the fourth central moment of the NB law.
        let p = s / (s + m);
        let kurt_excess = 6.0 / s + p * p / (s * (1.0 - p));
        let mu4 = target * target * (3.0 + kurt_excess);
        let se_var = ((mu4 - target * target) / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se_var, "var {var} target {target} se {se_var}");
    }

    #[test]
    fn iid_constant_unit_and_zero_panel() {
        let fit = fit_iid(&panel(vec![vec![4.0; 6], vec![1.0, 0.0, 3.0, 2.0, 0.0, 6.0]])).unwrap();
        assert_eq!(fit.mu[0], 4.0);
        assert_eq!(fit.df, 3);
        let zero = fit_iid(&panel(vec![vec![0.0; 5]; 2])).unwrap();
        assert!(zero.s.is_infinite());
        assert_eq!(zero.loglik, 0.0);
    }

    fn synthetic(u: usize, n: usize, mu: f64, phi: f64, s: f64, seed: u64) -> ObservationPanel {
        let rows = (0..u)
            .map(|i| {
                let mut rng = stream(seed, StreamKey::new(i as u64, 0, 0, Purpose::Replicate));
                let mut prev = 0.0;
                (0..n)
                    .map(|_| {
                        let y = negbin_sample(mu + phi * prev, s, &mut rng);
                        prev = y;
                        y
                    })
                    .collect()
            })
            .collect();
        panel(rows)
    }

    #[test]
    fn iid_recovers_scale_and_beats_grid() {
        let data = synthetic(50, 200, 10.0, 0.0, 5.0, 11);
        let fit = fit_iid(&data).unwrap();
        assert!((4.0..=6.0).contains(&fit.s), "s = {}", fit.s);
        let series = unit_series(&data).unwrap();
        let grid_best = (1..=500)
            .map(|k| total_loglik(&series, &fit.mu, 0.0, k as f64 * 0.1))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(fit.loglik >= grid_best - 0.01);
    }

    #[test]
    fn ar_recovers_phi_and_nests_iid() {
        let data = synthetic(20, 60, 3.0, 0.7, 4.0, 5);
        let ar = fit_ar(&data).unwrap();
        let iid = fit_iid(&data).unwrap();
        assert!((0.6..=0.8).contains(&ar.phi), "phi = {}", ar.phi);
        assert!(ar.loglik > iid.loglik);
        assert_eq!(ar.df, 22);
    }

    #[test]
    fn ar_with_phi_zero_matches_iid() {
        let data = synthetic(8, 40, 5.0, 0.0, 2.0, 9);
        let iid = fit_iid(&data).unwrap();
        let opts = ArOptions {
            fixed_phi: Some(0.0),
            ..ArOptions::default()
        };
        let ar = fit_ar_with(&data, &opts).unwrap();
        assert!((ar.loglik - iid.loglik).abs() < 1e-6, "{} vs {}", ar.loglik, iid.loglik);
    }

    #[test]
    fn conditional_logliks_sum_and_convention() {
        let data = panel(vec![vec![3.0, 0.0, 5.0, 2.0], vec![0.0, 1.0, 0.0, 0.0]]);
        let ar = fit_ar(&data).unwrap();
        let fit = BenchmarkFit::Ar(ar.clone());
        let cond = conditional_logliks(&fit, &data).unwrap();
        let total: f64 = cond.iter().flatten().sum();
        assert!((total - ar.loglik).abs() < 1e-6);
        let first = negbin_logpmf(3.0, ar.mu[0], ar.s).unwrap();
        assert_eq!(cond[0][0], first);

        let iid = BenchmarkFit::Iid(fit_iid(&data).unwrap());
        let wrong = panel(vec![vec![1.0, 2.0]]);
        assert!(conditional_logliks(&iid, &wrong).is_err());
    }

    #[test]
    fn iid_cond_logliks_permute_with_columns() {
        let data = panel(vec![vec![3.0, 0.0, 5.0, 2.0]]);
        let perm = panel(vec![vec![5.0, 2.0, 3.0, 0.0]]);
        let fit = BenchmarkFit::Iid(fit_iid(&data).unwrap());
        let a = conditional_logliks(&fit, &data).unwrap();
        let b = conditional_logliks(&fit, &perm).unwrap();
        assert_eq!(a[0][0], b[0][2]);
        assert_eq!(a[0][1], b[0][3]);
        assert_eq!(a[0][2], b[0][0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ar_never_below_iid(seed in 0u64..1000, phi in 0.0f64..0.9) {
            let data = synthetic(4, 25, 2.0, phi, 3.0, seed);
            let iid = fit_iid(&data).unwrap();
            let ar = fit_ar(&data).unwrap();
            prop_assert!(ar.loglik >= iid.loglik - 1e-9);
        }
    }
}
