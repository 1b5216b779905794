//! Ensemble Kalman filter with perturbed observations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, StandardNormal};

use super::block::check_inputs;
use super::{FilterConfig, FilterResult};
use crate::error::{Error, Result};
use crate::exec::for_each_mut;
use crate::pomp::model::advance;
use crate::pomp::{single_block, ObservationPanel, SpatPompModel, StateMatrix, UnitParams};
use crate::rng::{stream, Purpose, StreamKey};

/// Which reading of the "lower bound of 4" measurement variance to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceFloor {
    /// `min(4, C²/4)`.
    AsPrinted,
    /// `max(4, C²/4)`: never below 4.
    #[default]
    AsDescribed,
}

pub fn enkf_variance_floor(c: f64, mode: VarianceFloor) -> f64 {
    let q = c * c / 4.0;
    match mode {
        VarianceFloor::AsPrinted => q.min(4.0),
        VarianceFloor::AsDescribed => q.max(4.0),
    }
}

struct Member {
    state: StateMatrix,
    last: StateMatrix,
    error: Option<Error>,
}

/// Ensemble Kalman filter.
///
/// The likelihood at each time is the Gaussian density of the observed
/// units under the forecast mean and covariance (sample covariance of the
/// forecast ensemble plus the mean measurement variance). Units with a
/// missing observation are left out of that time's update.
pub fn enkf<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    data: &ObservationPanel,
    cfg: &FilterConfig,
) -> Result<FilterResult> {
    let n_units = model.n_units();
    check_inputs(n_units, data, &single_block(n_units), cfg.particles)?;
    let (j_count, seed) = (cfg.particles, cfg.seed);
    let up = UnitParams::shared(params);
    let grid = data.grid();
    let n_comp = model.compartments().len();
    let dim = n_units * n_comp;

    let mut members: Vec<Member> = (0..j_count)
        .map(|_| Member {
            state: StateMatrix::zeros(0, 0),
            last: StateMatrix::zeros(0, 0),
            error: None,
        })
        .collect();
    for_each_mut(cfg.exec, &mut members, |p, m| {
        match model.rinit(up, &mut stream(seed, StreamKey::new(0, p as u64, 0, Purpose::Init))) {
            Ok(x) => {
                m.last = x.clone();
                m.state = x;
            }
            Err(e) => m.error = Some(e),
        }
    });
    take_error(&mut members)?;

    let mut result = FilterResult::new(1, grid.len(), seed);
    let mut means = cfg.keep_filter_mean.then(Vec::new);
    let jf = j_count as f64;

    for n in 0..grid.len() {
        let step = n as u64 + 1;
        for_each_mut(cfg.exec, &mut members, |p, m| {
            let mut rng = stream(seed, StreamKey::new(0, p as u64, step, Purpose::Process));
            if let Err(e) = advance(model, &mut m.state, grid, n, up, &mut rng) {
                m.error = Some(e);
            }
        });
        take_error(&mut members)?;
        result.ess[0][n] = jf;

        let observed: Vec<(usize, f64)> = (0..n_units).filter_map(|u| data.get(u, n).map(|y| (u, y))).collect();
        if !observed.is_empty() {
            let m_obs = observed.len();
            let x = DMatrix::from_fn(dim, j_count, |i, p| members[p].state.as_slice()[i]);
            let mut yhat = DMatrix::zeros(m_obs, j_count);
            let mut r_diag = DVector::zeros(m_obs);
            for (p, mem) in members.iter().enumerate() {
                for (i, &(u, _)) in observed.iter().enumerate() {
                    yhat[(i, p)] = model.emeasure_unit(u, &mem.state, &mem.last, params);
                    r_diag[i] += model.vmeasure_unit(u, &mem.state, &mem.last, params) / jf;
                }
            }
            let y_obs = DVector::from_iterator(m_obs, observed.iter().map(|&(_, y)| y));
            let x_mean = x.column_mean();
            let y_mean = yhat.column_mean();
            let x_c = &x - &x_mean * DMatrix::from_element(1, j_count, 1.0);
            let y_c = &yhat - &y_mean * DMatrix::from_element(1, j_count, 1.0);

            let mut sigma_y = &y_c * y_c.transpose() / (jf - 1.0);
            for i in 0..m_obs {
                sigma_y[(i, i)] += r_diag[i];
            }
            let sigma_xy = &x_c * y_c.transpose() / (jf - 1.0);
            let chol = factor_with_ridge(&mut sigma_y, &mut result.warnings, n)?;

            // K = Σ_XY Σ_Y⁻¹, computed as (Σ_Y⁻¹ Σ_YX)ᵀ
            let gain = chol.solve(&sigma_xy.transpose()).transpose();

            let resid = &y_obs - &y_mean;
            let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let quad = resid.dot(&chol.solve(&resid));
            result.cond_loglik[0][n] =
                -0.5 * (m_obs as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);

            let r_sd: Vec<f64> = r_diag.iter().map(|v: &f64| v.max(0.0).sqrt()).collect();
            for_each_mut(cfg.exec, &mut members, |p, m| {
                let mut rng = stream(seed, StreamKey::new(0, p as u64, step, Purpose::ArtificialNoise));
                let innov = DVector::from_fn(m_obs, |i, _| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    y_obs[i] - yhat[(i, p)] + r_sd[i] * eps
                });
                let delta = &gain * innov;
                for (x, d) in m.state.as_mut_slice().iter_mut().zip(delta.iter()) {
                    *x += d;
                }
            });
        }
        for m in members.iter_mut() {
            m.last.clone_from(&m.state);
        }
        if let Some(ms) = means.as_mut() {
            let mut mean = StateMatrix::zeros(n_units, n_comp);
            for m in &members {
                for (a, x) in mean.as_mut_slice().iter_mut().zip(m.state.as_slice()) {
                    *a += x / jf;
                }
            }
            ms.push(mean);
        }
    }
    result.filter_mean = means;
    Ok(result.finish())
}

fn factor_with_ridge(
    sigma: &mut DMatrix<f64>,
    warnings: &mut Vec<String>,
    n: usize,
) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(sigma.clone()) {
        return Ok(c);
    }
    let m = sigma.nrows();
    let trace = sigma.trace();
    let mut ridge = 1e-6 * (trace / m as f64).abs().max(f64::MIN_POSITIVE);
    for _ in 0..12 {
        let mut s = sigma.clone();
        for i in 0..m {
            s[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(s.clone()) {
            warnings.push(format!(
                "forecast covariance singular at observation {n}; added ridge {ridge:.3e}"
            ));
            *sigma = s;
            return Ok(c);
        }
        ridge *= 10.0;
    }
    Err(Error::Internal(format!(
        "forecast covariance at observation {n} is not positive definite even after regularization"
    )))
}

fn take_error(members: &mut [Member]) -> Result<()> {
    match members.iter_mut().find_map(|m| m.error.take()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_modes() {
        assert_eq!(enkf_variance_floor(0.0, VarianceFloor::AsDescribed), 4.0);
        assert_eq!(enkf_variance_floor(0.0, VarianceFloor::AsPrinted), 0.0);
        assert_eq!(enkf_variance_floor(4.0, VarianceFloor::AsDescribed), 4.0);
        assert_eq!(enkf_variance_floor(4.0, VarianceFloor::AsPrinted), 4.0);
        assert_eq!(enkf_variance_floor(10.0, VarianceFloor::AsPrinted), 4.0);
        assert_eq!(enkf_variance_floor(10.0, VarianceFloor::AsDescribed), 25.0);
    }
}
