//! Iterated block particle filtering.
//!
//! Every particle carries one parameter copy per unit. Copies random-walk on
//! the estimation scale and get resampled with their unit's block; after each
//! iteration they are averaged back into one estimate.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec::{for_each_mut, map_indexed, Execution};
use crate::filters::resample::systematic_resample;
use crate::filters::{block_particle_filter, FailurePoint, FilterConfig, LOG_WEIGHT_FLOOR};
use crate::pomp::model::advance;
use crate::pomp::{validate_partition, ObservationPanel, ParameterSet, SpatPompModel, StateMatrix, UnitParams};
use crate::rng::{derive_seed, stream, Purpose, StreamKey};
use crate::stats::{log_mean_exp, mean, std_error};

/// Default random-walk sd (estimation scale) for regular parameters.
pub const DEFAULT_RW_SD: f64 = 0.02;
/// Default random-walk sd for initial-value parameters.
pub const DEFAULT_IVP_RW_SD: f64 = 0.1;

/// Cooling factor under which the random-walk sd halves every 25 iterations.
pub fn default_cooling() -> f64 {
    0.5f64.powf(1.0 / 25.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSchedule {
    /// Random-walk sd per parameter name; unnamed parameters are not perturbed.
    pub rw_sd: Vec<(String, f64)>,
    pub cooling_factor: f64,
    pub iterations: usize,
    /// Parameters that only affect the initial state; perturbed once, before `t0`.
    pub ivp_names: Vec<String>,
}

impl PerturbationSchedule {
    /// Default sds for every free parameter of `set`.
    pub fn defaults(set: &ParameterSet, ivp_names: &[&str], iterations: usize) -> Self {
        let rw_sd = set
            .iter()
            .filter(|p| !p.fixed)
            .map(|p| {
                let sd = if ivp_names.contains(&p.name.as_str()) {
                    DEFAULT_IVP_RW_SD
                } else {
                    DEFAULT_RW_SD
                };
                (p.name.clone(), sd)
            })
            .collect();
        Self {
            rw_sd,
            cooling_factor: default_cooling(),
            iterations,
            ivp_names: ivp_names.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Random-walk sd at iteration `m` (1-based).
    pub fn sd_at(&self, base: f64, m: usize) -> f64 {
        base * self.cooling_factor.powi(m as i32)
    }

    fn validate(&self, set: &ParameterSet) -> Result<()> {
        if !(self.cooling_factor > 0.0 && self.cooling_factor <= 1.0) {
            return Err(invalid(format!(
                "cooling factor must lie in (0, 1], got {}",
                self.cooling_factor
            )));
        }
        for (name, sd) in &self.rw_sd {
            set.param(name)?;
            if !(*sd >= 0.0) {
                return Err(invalid(format!("random-walk sd for {name} must be non-negative")));
            }
        }
        for name in &self.ivp_names {
            set.param(name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbpfConfig {
    pub particles: usize,
    pub blocks: Vec<Vec<usize>>,
    pub schedule: PerturbationSchedule,
    pub seed: u64,
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Natural-scale values in parameter-set order.
    pub values: Vec<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTrace {
    pub names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbpfOutcome {
    pub estimate: ParameterSet,
    pub trace: ParamTrace,
    /// Set when an iteration's filter collapsed; the estimate is then the last completed one.
    pub failure: Option<(usize, FailurePoint)>,
}

struct Carrier<P> {
    state: StateMatrix,
    last: StateMatrix,
    /// Estimation-scale parameters, `n_units × n_params`, unit-major.
    theta: Vec<f64>,
    resolved: Vec<P>,
    log_dens: Vec<f64>,
    error: Option<Error>,
}

/// Which parameters move, with their iteration-`m` sd: `(index, sd, is_ivp)`.
fn moving_params(set: &ParameterSet, schedule: &PerturbationSchedule, m: usize) -> Vec<(usize, f64, bool)> {
    schedule
        .rw_sd
        .iter()
        .filter_map(|(name, sd)| {
            let i = set.index_of(name)?;
            (!set.is_fixed(i) && *sd > 0.0).then(|| {
                let ivp = schedule.ivp_names.iter().any(|n| n == name);
                (i, schedule.sd_at(*sd, m), ivp)
            })
        })
        .collect()
}

/// Runs `schedule.iterations` iterations from `start`.
pub fn ibpf<M: SpatPompModel>(
    model: &M,
    start: &ParameterSet,
    data: &ObservationPanel,
    cfg: &IbpfConfig,
) -> Result<IbpfOutcome> {
    let n_units = model.n_units();
    if cfg.particles < 2 {
        return Err(invalid("IBPF needs at least 2 particles"));
    }
    if data.n_units() != n_units {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_units} units of data"),
            found: data.n_units().to_string(),
        });
    }
    validate_partition(n_units, &cfg.blocks)?;
    cfg.schedule.validate(start)?;
    model.resolve(start)?;

    let names: Vec<String> = start.names().map(str::to_string).collect();
    let mut trace = ParamTrace { names, rows: Vec::new() };
    let mut estimate = start.clone();
    for m in 1..=cfg.schedule.iterations {
        let moving = moving_params(&estimate, &cfg.schedule, m);
        let (next, loglik, failure) = ibpf_iteration(model, &estimate, data, cfg, m, &moving)?;
        if let Some(f) = failure {
            return Ok(IbpfOutcome {
                estimate,
                trace,
                failure: Some((m, f)),
            });
        }
        estimate = next;
        trace.rows.push(TraceRow {
            iteration: m,
            values: estimate.iter().map(|p| p.value).collect(),
            loglik,
        });
    }
    Ok(IbpfOutcome {
        estimate,
        trace,
        failure: None,
    })
}

fn perturb<G: Rng>(theta: &mut [f64], n_params: usize, moving: &[(usize, f64, bool)], ivp_pass: bool, rng: &mut G) {
    for unit_theta in theta.chunks_mut(n_params) {
        for &(i, sd, is_ivp) in moving {
            if is_ivp && !ivp_pass {
                continue;
            }
            let z: f64 = StandardNormal.sample(rng);
            unit_theta[i] += sd * z;
        }
    }
}

fn resolve_units<M: SpatPompModel>(
    model: &M,
    base: &ParameterSet,
    theta: &[f64],
    n_params: usize,
) -> Result<Vec<M::Params>> {
    theta
        .chunks(n_params)
        .map(|t| model.resolve(&base.from_estimation_scale(t)?))
        .collect()
}

type IterationOutput = (ParameterSet, f64, Option<FailurePoint>);

fn ibpf_iteration<M: SpatPompModel>(
    model: &M,
    current: &ParameterSet,
    data: &ObservationPanel,
    cfg: &IbpfConfig,
    m: usize,
    moving: &[(usize, f64, bool)],
) -> Result<IterationOutput> {
    let n_units = model.n_units();
    let n_params = current.len();
    let theta0 = current.to_estimation_scale()?;
    let grid = data.grid();
    let (seed, rep) = (cfg.seed, m as u64);
    let shared = model.resolve(current)?;

    let mut carriers: Vec<Carrier<M::Params>> = (0..cfg.particles)
        .map(|_| Carrier {
            state: StateMatrix::zeros(0, 0),
            last: StateMatrix::zeros(0, 0),
            theta: theta0.repeat(n_units),
            resolved: vec![shared.clone(); n_units],
            log_dens: vec![0.0; n_units],
            error: None,
        })
        .collect();

    for_each_mut(cfg.exec, &mut carriers, |p, c| {
        let mut run = || -> Result<()> {
            if !moving.is_empty() {
                let mut rng = stream(seed, StreamKey::new(rep, p as u64, 0, Purpose::Perturb));
                perturb(&mut c.theta, n_params, moving, true, &mut rng);
                c.resolved = resolve_units(model, current, &c.theta, n_params)?;
            }
            let mut rng = stream(seed, StreamKey::new(rep, p as u64, 0, Purpose::Init));
            c.state = model.rinit(UnitParams::per_unit(&c.resolved), &mut rng)?;
            c.last = c.state.clone();
            Ok(())
        };
        if let Err(e) = run() {
            c.error = Some(e);
        }
    });
    take_error(&mut carriers)?;

    let j_count = cfg.particles;
    let mut loglik = 0.0;
    let mut block_lw = vec![0.0; j_count];
    let mut weights = vec![0.0; j_count];
    let mut ancestors = Vec::with_capacity(cfg.blocks.len());

    for (n, &t) in grid.obs_times().iter().enumerate() {
        let step = n as u64 + 1;
        for_each_mut(cfg.exec, &mut carriers, |p, c| {
            let mut run = || -> Result<()> {
                if n > 0 && moving.iter().any(|&(_, _, ivp)| !ivp) {
                    let mut rng = stream(seed, StreamKey::new(rep, p as u64, step, Purpose::Perturb));
                    perturb(&mut c.theta, n_params, moving, false, &mut rng);
                    c.resolved = resolve_units(model, current, &c.theta, n_params)?;
                }
                let mut rng = stream(seed, StreamKey::new(rep, p as u64, step, Purpose::Process));
                advance(model, &mut c.state, grid, n, UnitParams::per_unit(&c.resolved), &mut rng)?;
                for u in 0..n_units {
                    c.log_dens[u] = match data.get(u, n) {
                        Some(y) => model.dmeasure_unit(y, u, &c.state, &c.last, t, &c.resolved[u]),
                        None => 0.0,
                    };
                }
                Ok(())
            };
            if let Err(e) = run() {
                c.error = Some(e);
            }
        });
        take_error(&mut carriers)?;

        ancestors.clear();
        for (b, block) in cfg.blocks.iter().enumerate() {
            for (lw, c) in block_lw.iter_mut().zip(&carriers) {
                let s: f64 = block.iter().map(|&u| c.log_dens[u]).sum();
                *lw = if s.is_nan() { LOG_WEIGHT_FLOOR } else { s.max(LOG_WEIGHT_FLOOR) };
            }
            let max = block_lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max <= LOG_WEIGHT_FLOOR {
                return Ok((current.clone(), f64::NEG_INFINITY, Some(FailurePoint { time: n, block: b })));
            }
            loglik += log_mean_exp(&block_lw);
            for (w, lw) in weights.iter_mut().zip(&block_lw) {
                *w = (lw - max).exp();
            }
            let u0: f64 = stream(seed, StreamKey::new(rep, b as u64, step, Purpose::Resample)).random();
            ancestors.push(systematic_resample(&weights, u0));
        }

        let parents: Vec<(StateMatrix, Vec<f64>, Vec<M::Params>)> = carriers
            .iter()
            .map(|c| (c.state.clone(), c.theta.clone(), c.resolved.clone()))
            .collect();
        for_each_mut(cfg.exec, &mut carriers, |p, c| {
            for (block, anc) in cfg.blocks.iter().zip(&ancestors) {
                let (state, theta, resolved) = &parents[anc[p]];
                for &u in block {
                    c.state.copy_unit_from(u, state);
                    c.theta[u * n_params..(u + 1) * n_params]
                        .copy_from_slice(&theta[u * n_params..(u + 1) * n_params]);
                    c.resolved[u] = resolved[u].clone();
                }
            }
            c.last.clone_from(&c.state);
        });
    }

    let mut next = current.clone();
    if !moving.is_empty() {
        let copies = (j_count * n_units) as f64;
        let mut theta = theta0.clone();
        for &(i, _, _) in moving {
            theta[i] = carriers
                .iter()
                .flat_map(|c| c.theta.chunks(n_params).map(move |t| t[i]))
                .sum::<f64>()
                / copies;
        }
        let averaged = current.from_estimation_scale(&theta)?;
        for &(i, _, _) in moving {
            let name = averaged.iter().nth(i).map(|p| p.name.clone()).expect("index in range");
            next.set(&name, averaged.value_at(i))?;
        }
    }
    Ok((next, loglik, None))
}

fn take_error<P>(carriers: &mut [Carrier<P>]) -> Result<()> {
    match carriers.iter_mut().find_map(|c| c.error.take()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// One row of a multi-start search, re-evaluated with independent block filters.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRow {
    pub start_index: usize,
    pub estimate: ParameterSet,
    pub loglik: f64,
    pub se: f64,
    pub trace: ParamTrace,
    pub error: Option<String>,
}

/// Runs IBPF from each start, re-evaluates each estimate with `eval_reps`
/// block filters of `eval_particles` particles, and ranks by mean log-likelihood.
pub fn replicated_search<M: SpatPompModel>(
    model: &M,
    starts: &[ParameterSet],
    data: &ObservationPanel,
    cfg: &IbpfConfig,
    eval_reps: usize,
    eval_particles: usize,
) -> Result<Vec<SearchRow>> {
    if starts.is_empty() {
        return Err(invalid("replicated search needs at least one start"));
    }
    if eval_reps == 0 {
        return Err(invalid("replicated search needs at least one evaluation replicate"));
    }
    let mut rows = map_indexed(cfg.exec, starts.len(), |s| {
        let mut trace = ParamTrace {
            names: starts[s].names().map(str::to_string).collect(),
            rows: Vec::new(),
        };
        let mut run = || -> Result<(ParameterSet, Vec<f64>)> {
            let sub = IbpfConfig {
                seed: derive_seed(cfg.seed, &[s as u64]),
                ..cfg.clone()
            };
            let out = ibpf(model, &starts[s], data, &sub)?;
            trace = out.trace.clone();
            if let Some((m, f)) = out.failure {
                return Err(invalid(format!(
                    "filter collapsed in iteration {m} at time index {}, block {}",
                    f.time, f.block
                )));
            }
            let params = model.resolve(&out.estimate)?;
            let lls = (0..eval_reps)
                .map(|r| {
                    let fc = FilterConfig::new(eval_particles, derive_seed(cfg.seed, &[s as u64, 1 + r as u64]))
                        .with_exec(cfg.exec);
                    block_particle_filter(model, &params, data, &cfg.blocks, &fc).map(|f| f.loglik_total)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok((out.estimate, lls))
        };
        match run() {
            Ok((estimate, lls)) => SearchRow {
                start_index: s,
                estimate,
                loglik: mean(&lls),
                se: std_error(&lls),
                trace,
                error: None,
            },
            Err(e) => SearchRow {
                start_index: s,
                estimate: starts[s].clone(),
                loglik: f64::NAN,
                se: f64::NAN,
                trace,
                error: Some(e.to_string()),
            },
        }
    });
    rows.sort_by(|a, b| match (a.loglik.is_nan(), b.loglik.is_nan()) {
        (false, false) => b.loglik.total_cmp(&a.loglik).then(a.start_index.cmp(&b.start_index)),
        (x, y) => x.cmp(&y),
    });
    Ok(rows)
}
