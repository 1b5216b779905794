//! Profile likelihoods and Monte Carlo adjusted profile (MCAP) intervals.
//!
//! The MCAP construction mirrors the reference implementation: a loess
//! smooth of the noisy profile locates the peak; a weighted quadratic fit
//! `loglik ~ c - a x^2 + b x` around it gives the delta-method Monte Carlo
//! variance of the peak location `b / 2a`; the chi-squared cutoff is then
//! `q * (a * se_mc^2 + 1/2)`.

use nalgebra::{Matrix3, Vector3};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::map_indexed;
use crate::ibpf::{replicated_search, IbpfConfig, PerturbationSchedule};
use crate::pomp::{ObservationPanel, ParameterSet, SpatPompModel};
use crate::rng::{derive_seed, stream, Purpose, StreamKey};
use crate::stats::chi2_1_quantile;

/// Smoothed profile is evaluated on this many equally spaced values.
pub const MCAP_GRID: usize = 1000;
pub const DEFAULT_SPAN: f64 = 0.75;
const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfilePoint {
    pub value: f64,
    /// NaN when every search at this value failed.
    pub loglik: f64,
    pub se: f64,
    pub maximized_params: ParameterSet,
    pub error: Option<String>,
}

impl ProfilePoint {
    pub fn is_missing(&self) -> bool {
        !self.loglik.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub ibpf: IbpfConfig,
    /// IBPF searches per grid value.
    pub starts: usize,
    /// sd of start jitter on the estimation scale, applied to parameters with a positive random-walk sd.
    pub jitter_sd: f64,
    pub eval_reps: usize,
    pub eval_particles: usize,
}

/// Profiles `param` over `values`: at each value the parameter is fixed and the
/// others are maximized by IBPF from jittered starts; the best search is kept.
pub fn profile_grid<M: SpatPompModel>(
    model: &M,
    data: &ObservationPanel,
    param: &str,
    values: &[f64],
    base: &ParameterSet,
    cfg: &ProfileConfig,
) -> Result<Vec<ProfilePoint>> {
    if values.len() < MIN_POINTS {
        return Err(invalid(format!("profile grid needs at least {MIN_POINTS} values, got {}", values.len())));
    }
    if base.param(param)?.fixed {
        return Err(invalid(format!("profiled parameter `{param}` is fixed in the base set")));
    }
    if cfg.starts == 0 {
        return Err(invalid("profile needs at least one start per grid value"));
    }
    let seed = cfg.ibpf.seed;
    map_indexed(cfg.ibpf.exec, values.len(), |i| {
        let v = values[i];
        let point_seed = derive_seed(seed, &[i as u64]);
        let mut fixed = base.clone();
        fixed.set(param, v)?;
        fixed.set_fixed(param, true)?;
        let starts = jittered_starts(&fixed, &cfg.ibpf.schedule, cfg.jitter_sd, cfg.starts, point_seed)?;
        let sub = IbpfConfig {
            seed: point_seed,
            ..cfg.ibpf.clone()
        };
        let rows = replicated_search(model, &starts, data, &sub, cfg.eval_reps, cfg.eval_particles)?;
        let best = &rows[0];
        Ok(ProfilePoint {
            value: v,
            loglik: best.loglik,
            se: best.se,
            maximized_params: best.estimate.clone(),
            error: best.error.clone(),
        })
    })
    .into_iter()
    .collect()
}

/// `n` starting points: `base` itself, then copies whose perturbed
/// parameters are jittered by `N(0, sd^2)` on the estimation scale.
pub fn jittered_starts(
    base: &ParameterSet,
    schedule: &PerturbationSchedule,
    sd: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<ParameterSet>> {
    let theta0 = base.to_estimation_scale()?;
    let moving: Vec<usize> = schedule
        .rw_sd
        .iter()
        .filter(|(_, rw)| *rw > 0.0)
        .filter_map(|(name, _)| base.index_of(name))
        .filter(|&i| !base.is_fixed(i))
        .collect();
    (0..n)
        .map(|k| {
            if k == 0 || moving.is_empty() || sd == 0.0 {
                return Ok(base.clone());
            }
            let mut rng = stream(seed, StreamKey::new(k as u64, 0, 0, Purpose::Jitter));
            let mut theta = theta0.clone();
            for &i in &moving {
                let z: f64 = StandardNormal.sample(&mut rng);
                theta[i] += sd * z;
            }
            base.from_estimation_scale(&theta)
        })
        .collect()
}

/// Local quadratic regression with tricube weights, evaluated at `at`.
pub fn loess(x: &[f64], y: &[f64], span: f64, at: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} responses", x.len()),
            found: y.len().to_string(),
        });
    }
    if x.len() < 3 {
        return Err(invalid("loess needs at least 3 points"));
    }
    if !(span > 0.0) {
        return Err(invalid(format!("smoother span must be positive, got {span}")));
    }
    let n = x.len();
    let q = ((span * n as f64).floor() as usize).clamp(4.min(n), n);
    let mut dist = vec![0.0; n];
    at.iter()
        .map(|&x0| {
            for (d, &xi) in dist.iter_mut().zip(x) {
                *d = (xi - x0).abs();
            }
            let mut sorted = dist.clone();
            sorted.sort_by(f64::total_cmp);
            let mut h = sorted[q - 1];
            if span > 1.0 {
                h *= span;
            }
            h = h.max(f64::MIN_POSITIVE) * (1.0 + 1e-6);
            let w: Vec<f64> = dist.iter().map(|d| tricube(d / h)).collect();
            local_poly(x, y, &w, x0)
        })
        .collect()
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u * u;
        t * t * t
    }
}

/// Weighted local fit centered at `x0`; quadratic when well posed, else linear.
fn local_poly(x: &[f64], y: &[f64], w: &[f64], x0: f64) -> Result<f64> {
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        if wi == 0.0 {
            continue;
        }
        let r = Vector3::new(1.0, xi - x0, (xi - x0) * (xi - x0));
        xtx += wi * r * r.transpose();
        xty += wi * yi * r;
    }
    if let Some(chol) = xtx.cholesky() {
        let beta = chol.solve(&xty);
        if beta[0].is_finite() {
            return Ok(beta[0]);
        }
    }
    let a = xtx.fixed_view::<2, 2>(0, 0).into_owned();
    let b = xty.fixed_rows::<2>(0).into_owned();
    a.cholesky()
        .map(|c| c.solve(&b)[0])
        .ok_or_else(|| invalid("smoother window holds too few distinct points"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McapResult {
    /// `(value, smoothed loglik)` on an even grid spanning the profile.
    pub smoothed: Vec<(f64, f64)>,
    pub mle: f64,
    pub cutoff: f64,
    pub ci: (f64, f64),
    /// Monte Carlo variance of the peak location.
    pub mc_error_variance: f64,
    pub se_stat: f64,
    pub quadratic_max: f64,
    pub warnings: Vec<String>,
}

fn usable(points: &[ProfilePoint]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| !p.is_missing())
        .map(|p| (p.value, p.loglik))
        .unzip();
    if x.len() < MIN_POINTS {
        return Err(invalid(format!(
            "profile needs at least {MIN_POINTS} non-missing points, got {}",
            x.len()
        )));
    }
    Ok((x, y))
}

fn smooth_on_grid(x: &[f64], y: &[f64], span: f64) -> Result<Vec<(f64, f64)>> {
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(invalid("profile values must span a non-empty range"));
    }
    let grid: Vec<f64> = (0..MCAP_GRID)
        .map(|i| lo + (hi - lo) * i as f64 / (MCAP_GRID - 1) as f64)
        .collect();
    let s = loess(x, y, span, &grid)?;
    Ok(grid.into_iter().zip(s).collect())
}

fn argmax(smoothed: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for (i, &(_, v)) in smoothed.iter().enumerate() {
        if v > smoothed[best].1 {
            best = i;
        }
    }
    best
}

/// Connected run of grid points within `cutoff` of the peak at `peak`.
/// The bool reports whether other grid points outside the run also qualify.
fn interval(smoothed: &[(f64, f64)], peak: usize, cutoff: f64) -> ((f64, f64), bool) {
    let max = smoothed[peak].1;
    let inside = |i: usize| max - smoothed[i].1 < cutoff;
    let mut lo = peak;
    while lo > 0 && inside(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < smoothed.len() && inside(hi + 1) {
        hi += 1;
    }
    let stray = (0..lo).chain(hi + 1..smoothed.len()).any(inside);
    ((smoothed[lo].0, smoothed[hi].0), stray)
}

/// MCAP confidence interval from noisy profile points.
pub fn mcap(points: &[ProfilePoint], confidence: f64, span: f64) -> Result<McapResult> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let (x, y) = usable(points)?;
    let smoothed = smooth_on_grid(&x, &y, span)?;
    let peak = argmax(&smoothed);
    let mle = smoothed[peak].0;
    if peak == 0 || peak == smoothed.len() - 1 {
        return Err(Error::BoundaryMaximum(mle));
    }

    // Weighted quadratic around the smoothed peak.
    let n = x.len();
    let dist: Vec<f64> = x.iter().map(|xi| (xi - mle).abs()).collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let k = ((span * n as f64).trunc() as usize).clamp(1, n);
    let threshold = sorted[k - 1];
    let included: Vec<bool> = dist.iter().map(|&d| d < threshold).collect();
    let maxdist = dist
        .iter()
        .zip(&included)
        .filter(|(_, &inc)| inc)
        .map(|(d, _)| *d)
        .fold(0.0, f64::max);
    let w: Vec<f64> = dist
        .iter()
        .zip(&included)
        .map(|(&d, &inc)| if inc && maxdist > 0.0 { tricube_closed(d / maxdist) } else { 0.0 })
        .collect();

    let mut warnings = Vec::new();
    let q = chi2_1_quantile(confidence);
    let (a, b, se_mc2) = match quadratic_fit(&x, &y, &w) {
        Some(fit) => fit,
        None => {
            warnings.push("too few weighted points near the peak for the quadratic fit; no Monte Carlo inflation".into());
            (f64::NAN, f64::NAN, 0.0)
        }
    };
    let mut cutoff = q * (a * se_mc2 + 0.5);
    if !(cutoff >= q / 2.0) {
        if a.is_finite() && a <= 0.0 {
            warnings.push("local quadratic is not concave; Monte Carlo inflation dropped".into());
        }
        cutoff = q / 2.0;
    }
    let (ci, stray) = interval(&smoothed, peak, cutoff);
    if stray {
        warnings.push("cutoff set is disconnected; reporting the component containing the maximum".into());
    }
    Ok(McapResult {
        smoothed,
        mle,
        cutoff,
        ci,
        mc_error_variance: if se_mc2.is_finite() { se_mc2.max(0.0) } else { 0.0 },
        se_stat: (1.0 / (2.0 * a)).sqrt(),
        quadratic_max: b / (2.0 * a),
        warnings,
    })
}

/// Tricube on the closed interval, so the farthest included point keeps weight 0.
fn tricube_closed(u: f64) -> f64 {
    let t = 1.0 - u * u * u;
    t * t * t
}

/// Weighted least squares for `y ~ c + a (-x^2) + b x`.
/// Returns `(a, b, se_mc^2)` with the delta-method variance of `b / 2a`.
fn quadratic_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let m = w.iter().filter(|&&wi| wi > 0.0).count();
    if m < 3 {
        return None;
    }
    // Centering keeps the normal equations well conditioned; the fit is mapped back below.
    let xc = x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() / w.iter().sum::<f64>();
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        if wi == 0.0 {
            continue;
        }
        let z = xi - xc;
        let r = Vector3::new(1.0, -z * z, z);
        xtx += wi * r * r.transpose();
        xty += wi * yi * r;
    }
    let inv = xtx.try_inverse()?;
    let beta = inv * xty;
    let (a, bc) = (beta[1], beta[2]);
    let rss: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let z = xi - xc;
            let r = yi - (beta[0] - a * z * z + bc * z);
            wi * r * r
        })
        .sum();
    let sigma2 = if m > 3 { rss / (m - 3) as f64 } else { 0.0 };
    let cov = inv * sigma2;
    // Uncentered linear coefficient b = bc + 2 a xc; peak = b / 2a = xc + bc / 2a.
    let b = bc + 2.0 * a * xc;
    let (var_a, var_bc, cov_abc) = (cov[(1, 1)], cov[(2, 2)], cov[(1, 2)]);
    let se_mc2 = (1.0 / (4.0 * a * a)) * (var_bc - (2.0 * bc / a) * cov_abc + (bc * bc / (a * a)) * var_a);
    Some((a, b, se_mc2))
}

/// Plain likelihood-ratio interval on the smoothed profile, for maxima on a boundary.
pub fn boundary_lrt(points: &[ProfilePoint], confidence: f64, span: f64) -> Result<(f64, f64)> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    let (x, y) = usable(points)?;
    let smoothed = smooth_on_grid(&x, &y, span)?;
    let peak = argmax(&smoothed);
    Ok(interval(&smoothed, peak, chi2_1_quantile(confidence) / 2.0).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(x: &[f64], y: &[f64]) -> Vec<ProfilePoint> {
        x.iter()
            .zip(y)
            .map(|(&value, &loglik)| ProfilePoint {
                value,
                loglik,
                se: 0.0,
                maximized_params: ParameterSet::new(),
                error: None,
            })
            .collect()
    }

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn loess_reproduces_quadratic() {
        let x = grid(-3.0, 5.0, 17);
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v * v - 2.0 * v + 1.0).collect();
        for span in [0.5, 0.75, 1.0, 1.5] {
            let s = loess(&x, &y, span, &x).unwrap();
            for (a, b) in s.iter().zip(&y) {
                assert!((a - b).abs() < 1e-8, "span {span}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn noiseless_quadratic_interval() {
        let x = grid(-2.0, 6.0, 41);
        let y: Vec<f64> = x.iter().map(|v| -(v - 2.0) * (v - 2.0)).collect();
        let r = mcap(&pts(&x, &y), 0.95, DEFAULT_SPAN).unwrap();
        let half = (chi2_1_quantile(0.95) / 2.0).sqrt();
        let step = 8.0 / (MCAP_GRID - 1) as f64;
        assert!(r.mc_error_variance < 1e-12);
        assert!((r.cutoff - chi2_1_quantile(0.95) / 2.0).abs() < 1e-9);
        assert!((r.ci.0 - (2.0 - half)).abs() <= step);
        assert!((r.ci.1 - (2.0 + half)).abs() <= step);
        assert!((r.mle - 2.0).abs() <= step);
    }

    #[test]
    fn noise_inflates_cutoff() {
        let x = grid(-2.0, 6.0, 11);
        let mut rng = stream(17, StreamKey::new(0, 0, 0, Purpose::Replicate));
        let noisy: Vec<f64> = x
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                -(v - 2.0) * (v - 2.0) + 0.5 * z
            })
            .collect();
        let r = mcap(&pts(&x, &noisy), 0.95, DEFAULT_SPAN).unwrap();
        let q2 = chi2_1_quantile(0.95) / 2.0;
        assert!(r.cutoff > q2);
        let (plain, _) = interval(&r.smoothed, argmax(&r.smoothed), q2);
        assert!(r.ci.0 < plain.0 && r.ci.1 > plain.1, "{:?} vs {plain:?}", r.ci);
    }

    #[test]
    fn boundary_and_size_errors() {
        let x = grid(0.0, 4.0, 9);
        let y: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(matches!(mcap(&pts(&x, &y), 0.95, 0.75), Err(Error::BoundaryMaximum(_))));
        let (lo, hi) = boundary_lrt(&pts(&x, &y), 0.95, 0.75).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 1.92).abs() < 0.01, "{hi}");
        assert!(mcap(&pts(&x[..4], &y[..4]), 0.95, 0.75).is_err());
        assert!(mcap(&pts(&x, &y), 1.0, 0.75).is_err());
    }

    #[test]
    fn missing_points_are_skipped() {
        let x = grid(-2.0, 6.0, 12);
        let mut y: Vec<f64> = x.iter().map(|v| -(v - 2.0) * (v - 2.0)).collect();
        y[3] = f64::NAN;
        y[7] = f64::NEG_INFINITY;
        let r = mcap(&pts(&x, &y), 0.95, 0.75).unwrap();
        assert!(r.ci.0 < 2.0 && r.ci.1 > 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn cutoff_floor_and_lrt_nesting(seed in 0u64..10_000, sd in 0.0f64..1.0) {
            let x = grid(-2.0, 6.0, 25);
            let mut rng = stream(seed, StreamKey::new(0, 0, 0, Purpose::Replicate));
            let y: Vec<f64> = x
                .iter()
                .map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    -(v - 2.0) * (v - 2.0) + sd * z
                })
                .collect();
            let p = pts(&x, &y);
            if let Ok(r) = mcap(&p, 0.95, 0.75) {
                prop_assert!(r.cutoff >= chi2_1_quantile(0.95) / 2.0);
                prop_assert!(r.ci.0 <= r.mle && r.mle <= r.ci.1);
                let lrt = boundary_lrt(&p, 0.95, 0.75).unwrap();
                prop_assert!(lrt.0 >= r.ci.0 && lrt.1 <= r.ci.1);
            }
        }

        #[test]
        fn width_monotone_in_cutoff(c1 in 0.1f64..5.0, c2 in 0.1f64..5.0) {
            let s: Vec<(f64, f64)> = grid(-3.0, 3.0, 301).into_iter().map(|x| (x, -x * x)).collect();
            let peak = argmax(&s);
            let (a, _) = interval(&s, peak, c1.min(c2));
            let (b, _) = interval(&s, peak, c1.max(c2));
            prop_assert!(b.1 - b.0 >= a.1 - a.0);
        }
    }
}
