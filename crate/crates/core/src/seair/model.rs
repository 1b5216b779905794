use std::sync::Arc;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};

use super::measure::{dmeasure, measurement_variance, rmeasure};
use super::params::SeairParams;
use crate::error::{invalid, Error, Result};
use crate::filters::enkf::{enkf_variance_floor, VarianceFloor};
use crate::mobility::MobilityTensor;
use crate::pomp::{ParameterSet, SpatPompModel, StateMatrix, UnitParams};
use crate::rng::StreamRng;

pub const S: usize = 0;
pub const E: usize = 1;
pub const A: usize = 2;
pub const I: usize = 3;
pub const R: usize = 4;
pub const CA: usize = 5;
pub const CB: usize = 6;
pub const C: usize = 7;

pub const COMPARTMENTS: [&str; 8] = ["S", "E", "A", "I", "R", "Ca", "Cb", "C"];

/// Measurement variance used by the ensemble Kalman filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EnkfVariance {
    /// The particle-filter measurement variance `C + τ²C²`.
    Model,
    /// A floored variance (see [`enkf_variance_floor`]).
    #[default]
    FloorAsDescribed,
    FloorAsPrinted,
}

/// SEAIR metapopulation model with movement through a shared transport pool.
#[derive(Debug, Clone)]
pub struct SeairModel {
    populations: Vec<f64>,
    mobility: Arc<MobilityTensor>,
    /// Units seeded with `E0`, `A0`; normally just one.
    sources: Vec<usize>,
    /// Model time at which mobility day 0 begins.
    mobility_origin: f64,
    enkf_variance: EnkfVariance,
}

impl SeairModel {
    pub fn new(populations: Vec<f64>, mobility: Arc<MobilityTensor>, source_unit: usize) -> Result<Self> {
        if populations.is_empty() {
            return Err(invalid("SEAIR model needs at least one unit"));
        }
        if mobility.n_units() != populations.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("mobility over {} units", populations.len()),
                found: mobility.n_units().to_string(),
            });
        }
        if source_unit >= populations.len() {
            return Err(invalid(format!("source unit {source_unit} out of range")));
        }
        if let Some(u) = populations.iter().position(|p| !(*p > 0.0)) {
            return Err(invalid(format!("population of unit {u} must be positive")));
        }
        Ok(Self {
            populations: populations.iter().map(|p| p.round()).collect(),
            mobility,
            sources: vec![source_unit],
            mobility_origin: 0.0,
            enkf_variance: EnkfVariance::default(),
        })
    }

    pub fn with_mobility_origin(mut self, t: f64) -> Self {
        self.mobility_origin = t;
        self
    }

    pub fn with_enkf_variance(mut self, v: EnkfVariance) -> Self {
        self.enkf_variance = v;
        self
    }

    pub fn populations(&self) -> &[f64] {
        &self.populations
    }

    pub fn mobility(&self) -> &MobilityTensor {
        &self.mobility
    }

    pub fn source_unit(&self) -> usize {
        self.sources[0]
    }

    /// Seeds every unit in `sources` (each with its own `E0`, `A0`).
    pub fn with_sources(mut self, sources: Vec<usize>) -> Result<Self> {
        if sources.is_empty() {
            return Err(invalid("at least one source unit is needed"));
        }
        if let Some(u) = sources.iter().find(|&&u| u >= self.populations.len()) {
            return Err(invalid(format!("source unit {u} out of range")));
        }
        self.sources = sources;
        Ok(self)
    }

    /// Initial state: `E0`, `A0` at each source unit, everyone else susceptible.
    pub fn initial_state(&self, params: UnitParams<'_, SeairParams>) -> Result<StateMatrix> {
        let mut x = StateMatrix::zeros(self.populations.len(), COMPARTMENTS.len());
        for (u, &pop) in self.populations.iter().enumerate() {
            x.set(u, S, pop);
        }
        for &u in &self.sources {
            let p = params.get(u);
            let (e0, a0) = (p.e0.round(), p.a0.round());
            let pop = self.populations[u];
            if e0 + a0 > pop {
                return Err(invalid(format!("E0 + A0 = {} exceeds the source population {pop}", e0 + a0)));
            }
            x.set(u, E, e0);
            x.set(u, A, a0);
            x.set(u, S, pop - e0 - a0);
        }
        Ok(x)
    }

    /// One Euler-multinomial step of length `dt` starting at time `t`.
    pub fn euler_step(
        &self,
        x: &mut StateMatrix,
        t: f64,
        dt: f64,
        params: UnitParams<'_, SeairParams>,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let n_units = self.populations.len();
        let day = self.mobility.day_index(t - self.mobility_origin);

        let count = |v: f64| v.max(0.0).round();
        let mut denom = Vec::with_capacity(n_units);
        let mut travel_out = vec![0.0; n_units];
        let mut arrive = vec![[0.0f64; 3]; n_units];
        for u in 0..n_units {
            let row = x.unit(u);
            let living = count(row[S]) + count(row[E]) + count(row[A]) + count(row[I]) + count(row[R]);
            denom.push((living - count(row[I])).max(1.0));
        }
        for j in 0..n_units {
            let theta = params.get(j).theta;
            if theta == 0.0 {
                continue;
            }
            let out = self.mobility.out_total(day, j);
            travel_out[j] = theta * out / denom[j];
            let row = x.unit(j);
            let per_cap = theta / denom[j];
            let src = [count(row[S]) * per_cap, count(row[E]) * per_cap, count(row[A]) * per_cap];
            for &(u, flow) in self.mobility.row(day, j) {
                for k in 0..3 {
                    arrive[u][k] += flow * src[k];
                }
            }
        }

        for u in 0..n_units {
            let p = params.get(u);
            let r = p.regime(t);
            let row = x.unit(u);
            let (s, e, a, i) = (count(row[S]), count(row[E]), count(row[A]), count(row[I]));
            let (rec, ca, cb, c) = (count(row[R]), count(row[CA]), count(row[CB]), count(row[C]));
            let living = s + e + a + i + rec;

            let dgamma = gamma_noise_increment(dt, p.sigma_se, rng);
            let foi = infection_rate(r.beta, r.mu, i, a, living, dgamma, dt);
            let out = travel_out[u];

            let [se, st] = euler_multinomial(s, [foi, out], dt, rng);
            let [ei, ea, et] = euler_multinomial(e, [r.alpha / r.z, (1.0 - r.alpha) / r.z, out], dt, rng);
            let [ar, at] = euler_multinomial(a, [1.0 / r.d, out], dt, rng);
            let [ir] = euler_multinomial(i, [1.0 / r.d], dt, rng);
            let delay_rate = super::params::DELAY_STAGES / r.td;
            let [ca_cb] = euler_multinomial(ca, [delay_rate], dt, rng);
            let [cb_c] = euler_multinomial(cb, [delay_rate], dt, rng);

            let ts = poisson(arrive[u][0] * dt, rng);
            let te = poisson(arrive[u][1] * dt, rng);
            let ta = poisson(arrive[u][2] * dt, rng);

            let next = [
                s - se - st + ts,
                e + se - ei - ea - et + te,
                a + ea - ar - at + ta,
                i + ei - ir,
                rec + ir + ar,
                ca + ei - ca_cb,
                cb + ca_cb - cb_c,
                c + cb_c,
            ];
            if let Some(k) = next.iter().position(|v| *v < 0.0) {
                return Err(Error::Internal(format!(
                    "negative {} count at unit {u}, t = {t}",
                    COMPARTMENTS[k]
                )));
            }
            x.unit_mut(u).copy_from_slice(&next);
        }
        Ok(())
    }
}

/// Per-capita infection rate `β(I + μA)/N · ΔΓ/dt`. An empty unit cannot transmit.
#[inline]
pub fn infection_rate(beta: f64, mu: f64, i: f64, a: f64, living: f64, gamma_increment: f64, dt: f64) -> f64 {
    if living <= 0.0 {
        return 0.0;
    }
    beta * (i + mu * a) / living * (gamma_increment / dt)
}

/// Increment of a gamma process over `dt`: mean `dt`, variance `σ·dt`. Exactly `dt` when `σ = 0`.
pub fn gamma_noise_increment<G: Rng + ?Sized>(dt: f64, sigma: f64, rng: &mut G) -> f64 {
    if sigma <= 0.0 {
        return dt;
    }
    Gamma::new(dt / sigma, sigma)
        .expect("positive gamma shape and scale")
        .sample(rng)
}

/// Splits exits from a compartment of size `n` among competing per-capita
/// `rates` over `dt`: total exits are binomial with probability
/// `1 − exp(−Σr·dt)`, divided multinomially in proportion to the rates.
pub fn euler_multinomial<G: Rng + ?Sized, const K: usize>(n: f64, rates: [f64; K], dt: f64, rng: &mut G) -> [f64; K] {
    let mut out = [0.0; K];
    let total: f64 = rates.iter().sum();
    if n <= 0.0 || !(total > 0.0) {
        return out;
    }
    let p_exit = -(-total * dt).exp_m1();
    let mut remaining = binomial(n, p_exit, rng);
    let mut rate_left = total;
    for k in 0..K {
        if remaining <= 0.0 {
            break;
        }
        if k == K - 1 {
            out[k] = remaining;
            break;
        }
        let p = (rates[k] / rate_left).clamp(0.0, 1.0);
        let draw = binomial(remaining, p, rng);
        out[k] = draw;
        remaining -= draw;
        rate_left -= rates[k];
    }
    out
}

#[inline]
fn binomial<G: Rng + ?Sized>(n: f64, p: f64, rng: &mut G) -> f64 {
    if n <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as f64
}

#[inline]
fn poisson<G: Rng + ?Sized>(mean: f64, rng: &mut G) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    Poisson::new(mean).expect("positive poisson mean").sample(rng).round()
}

/// `C_u(t_n) − C_u(t_{n−1})`; negative only if the state is corrupt.
pub fn case_increment(prev: &StateMatrix, now: &StateMatrix, u: usize) -> Result<f64> {
    let d = now.get(u, C) - prev.get(u, C);
    if d < 0.0 {
        return Err(Error::Internal(format!("reported cases decreased at unit {u}")));
    }
    Ok(d)
}

impl SpatPompModel for SeairModel {
    type Params = SeairParams;

    fn n_units(&self) -> usize {
        self.populations.len()
    }

    fn compartments(&self) -> &[&'static str] {
        &COMPARTMENTS
    }

    fn resolve(&self, set: &ParameterSet) -> Result<SeairParams> {
        SeairParams::from_set(set)
    }

    fn rinit(&self, params: UnitParams<'_, SeairParams>, _rng: &mut StreamRng) -> Result<StateMatrix> {
        self.initial_state(params)
    }

    fn rprocess_step(
        &self,
        state: &mut StateMatrix,
        t: f64,
        dt: f64,
        params: UnitParams<'_, SeairParams>,
        rng: &mut StreamRng,
    ) -> Result<()> {
        self.euler_step(state, t, dt, params, rng)
    }

    fn dmeasure_unit(&self, y: f64, u: usize, now: &StateMatrix, last: &StateMatrix, _t: f64, p: &SeairParams) -> f64 {
        let c = (now.get(u, C) - last.get(u, C)).max(0.0).round();
        dmeasure(y, c, p.tau)
    }

    fn rmeasure_unit(
        &self,
        u: usize,
        now: &StateMatrix,
        last: &StateMatrix,
        _t: f64,
        p: &SeairParams,
        rng: &mut StreamRng,
    ) -> f64 {
        let c = (now.get(u, C) - last.get(u, C)).max(0.0).round();
        rmeasure(c, p.tau, rng)
    }

    fn emeasure_unit(&self, u: usize, now: &StateMatrix, last: &StateMatrix, _p: &SeairParams) -> f64 {
        now.get(u, C) - last.get(u, C)
    }

    fn vmeasure_unit(&self, u: usize, now: &StateMatrix, last: &StateMatrix, p: &SeairParams) -> f64 {
        let c = (now.get(u, C) - last.get(u, C)).max(0.0);
        match self.enkf_variance {
            EnkfVariance::Model => measurement_variance(c, p.tau),
            EnkfVariance::FloorAsDescribed => enkf_variance_floor(c, VarianceFloor::AsDescribed),
            EnkfVariance::FloorAsPrinted => enkf_variance_floor(c, VarianceFloor::AsPrinted),
        }
    }
}
