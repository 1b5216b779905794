//! A linear-Gaussian model with independent units.
//!
//! `X_n = a X_{n-1} + N(0, q)` per sub-step, `Y_n = X_n + N(0, r)`,
//! `X_0 ~ N(m0, p0)`. The Kalman filter gives its likelihood exactly, which
//! makes it the reference model for checking filters.

use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Result};
use crate::pomp::{ObservationPanel, ParameterSet, SpatPompModel, StateMatrix, Transform, UnitParams};
use crate::rng::StreamRng;
use crate::stats::log_normal_pdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGaussianParams {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
}

impl LinearGaussianParams {
    pub fn to_set(&self) -> ParameterSet {
        ParameterSet::new()
            .with("a", self.a, Transform::Identity)
            .and_then(|s| s.with("q", self.q, Transform::Log))
            .and_then(|s| s.with("r", self.r, Transform::Log))
            .and_then(|s| s.with("m0", self.m0, Transform::Identity))
            .and_then(|s| s.with("p0", self.p0, Transform::Log))
            .expect("linear-Gaussian parameters out of domain")
    }
}

#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    n_units: usize,
}

impl LinearGaussianModel {
    pub fn new(n_units: usize) -> Self {
        assert!(n_units > 0);
        Self { n_units }
    }
}

impl SpatPompModel for LinearGaussianModel {
    type Params = LinearGaussianParams;

    fn n_units(&self) -> usize {
        self.n_units
    }

    fn compartments(&self) -> &[&'static str] {
        &["x"]
    }

    fn resolve(&self, set: &ParameterSet) -> Result<Self::Params> {
        let p = LinearGaussianParams {
            a: set.get("a")?,
            q: set.get("q")?,
            r: set.get("r")?,
            m0: set.get("m0")?,
            p0: set.get("p0")?,
        };
        if p.r <= 0.0 || p.q < 0.0 || p.p0 < 0.0 {
            return Err(invalid("linear-Gaussian variances must be non-negative (r positive)"));
        }
        Ok(p)
    }

    fn rinit(&self, params: UnitParams<'_, Self::Params>, rng: &mut StreamRng) -> Result<StateMatrix> {
        let mut s = StateMatrix::zeros(self.n_units, 1);
        for u in 0..self.n_units {
            let p = params.get(u);
            let z: f64 = StandardNormal.sample(rng);
            s.set(u, 0, p.m0 + p.p0.sqrt() * z);
        }
        Ok(s)
    }

    fn rprocess_step(
        &self,
        state: &mut StateMatrix,
        _t: f64,
        _dt: f64,
        params: UnitParams<'_, Self::Params>,
        rng: &mut StreamRng,
    ) -> Result<()> {
        for u in 0..self.n_units {
            let p = params.get(u);
            let z: f64 = StandardNormal.sample(rng);
            state.set(u, 0, p.a * state.get(u, 0) + p.q.sqrt() * z);
        }
        Ok(())
    }

    fn dmeasure_unit(&self, y: f64, u: usize, now: &StateMatrix, _last: &StateMatrix, _t: f64, p: &Self::Params) -> f64 {
        log_normal_pdf(y, now.get(u, 0), p.r)
    }

    fn rmeasure_unit(&self, u: usize, now: &StateMatrix, _last: &StateMatrix, _t: f64, p: &Self::Params, rng: &mut StreamRng) -> f64 {
        Normal::new(now.get(u, 0), p.r.sqrt())
            .expect("positive measurement variance")
            .sample(rng)
    }

    fn emeasure_unit(&self, u: usize, now: &StateMatrix, _last: &StateMatrix, _p: &Self::Params) -> f64 {
        now.get(u, 0)
    }

    fn vmeasure_unit(&self, _u: usize, _now: &StateMatrix, _last: &StateMatrix, p: &Self::Params) -> f64 {
        p.r
    }
}

/// Exact Kalman log-likelihood and filter means (`means[n][u]`) for the
/// linear-Gaussian model. Missing observations skip the update.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanResult {
    pub loglik: f64,
    pub cond_loglik: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
}

pub fn kalman(p: &LinearGaussianParams, data: &ObservationPanel) -> KalmanResult {
    let grid = data.grid();
    let n_units = data.n_units();
    let mut m = vec![p.m0; n_units];
    let mut var = vec![p.p0; n_units];
    let mut cond = vec![vec![0.0; grid.len()]; n_units];
    let mut means = Vec::with_capacity(grid.len());
    for n in 0..grid.len() {
        let k = grid.substeps(n).count();
        for u in 0..n_units {
            for _ in 0..k {
                m[u] *= p.a;
                var[u] = p.a * p.a * var[u] + p.q;
            }
            if let Some(y) = data.get(u, n) {
                let s = var[u] + p.r;
                cond[u][n] = log_normal_pdf(y, m[u], s);
                let gain = var[u] / s;
                m[u] += gain * (y - m[u]);
                var[u] *= 1.0 - gain;
            }
        }
        means.push(m.clone());
    }
    KalmanResult {
        loglik: cond.iter().flatten().sum(),
        cond_loglik: cond,
        means,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomp::TimeGrid;

    #[test]
    fn kalman_two_steps() {
        let p = LinearGaussianParams { a: 0.9, q: 0.5, r: 1.0, m0: 0.0, p0: 1.0 };
        let grid = TimeGrid::daily(0.0, 2, 0.5).unwrap();
        let data = ObservationPanel::new(vec![vec![Some(0.3), Some(-1.2)]], grid).unwrap();
        let k = kalman(&p, &data);
        // arbitrary-precision reference
        assert!((k.loglik - -3.137_438_043_497_359_8).abs() < 1e-12);
        assert!((k.means[1][0] - -0.615_112_758_399_026_5).abs() < 1e-12);
    }

    #[test]
    fn missing_observation_contributes_nothing() {
        let p = LinearGaussianParams { a: 0.9, q: 0.5, r: 1.0, m0: 0.0, p0: 1.0 };
        let grid = TimeGrid::daily(0.0, 2, 1.0).unwrap();
        let data = ObservationPanel::new(vec![vec![None, Some(1.0)]], grid).unwrap();
        let k = kalman(&p, &data);
        assert_eq!(k.cond_loglik[0][0], 0.0);
        assert!((k.loglik - log_normal_pdf(1.0, 0.0, 0.81 * (0.81 + 0.5) + 0.5 + 1.0)).abs() < 1e-12);
    }
}
