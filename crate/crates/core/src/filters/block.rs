use rand::Rng;

use super::resample::{effective_sample_size, systematic_resample};
use super::{FailurePoint, FilterConfig, FilterResult, LOG_WEIGHT_FLOOR};
use crate::error::{invalid, Error, Result};
use crate::exec::for_each_mut;
use crate::pomp::model::advance;
use crate::pomp::{single_block, validate_partition, ObservationPanel, SpatPompModel, StateMatrix, UnitParams};
use crate::rng::{stream, Purpose, StreamKey};
use crate::stats::log_mean_exp;

struct Particle {
    state: StateMatrix,
    last: StateMatrix,
    /// Per-unit measurement log-densities at the current observation time.
    log_dens: Vec<f64>,
    error: Option<Error>,
}

/// Bootstrap particle filter: the block filter with every unit in one block.
pub fn particle_filter<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    data: &ObservationPanel,
    cfg: &FilterConfig,
) -> Result<FilterResult> {
    block_particle_filter(model, params, data, &single_block(model.n_units()), cfg)
}

/// Block particle filter.
///
/// Particles are propagated jointly. At each observation time every block is
/// weighted by the product of its units' measurement densities and resampled
/// on its own, so a new particle is assembled from blocks of different parents.
pub fn block_particle_filter<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    data: &ObservationPanel,
    blocks: &[Vec<usize>],
    cfg: &FilterConfig,
) -> Result<FilterResult> {
    let n_units = model.n_units();
    check_inputs(n_units, data, blocks, cfg.particles)?;
    let (j_count, seed) = (cfg.particles, cfg.seed);
    let up = UnitParams::shared(params);
    let grid = data.grid();

    let mut particles: Vec<Particle> = (0..j_count)
        .map(|_| Particle {
            state: StateMatrix::zeros(0, 0),
            last: StateMatrix::zeros(0, 0),
            log_dens: vec![0.0; n_units],
            error: None,
        })
        .collect();
    for_each_mut(cfg.exec, &mut particles, |p, part| {
        match model.rinit(up, &mut stream(seed, StreamKey::new(0, p as u64, 0, Purpose::Init))) {
            Ok(x) => {
                part.last = x.clone();
                part.state = x;
            }
            Err(e) => part.error = Some(e),
        }
    });
    take_error(&mut particles)?;

    let mut result = FilterResult::new(blocks.len(), grid.len(), seed);
    let mut means = cfg.keep_filter_mean.then(Vec::new);
    let mut block_lw = vec![0.0; j_count];
    let mut weights = vec![0.0; j_count];
    let mut ancestors = Vec::with_capacity(blocks.len());

    for (n, &t) in grid.obs_times().iter().enumerate() {
        let step = n as u64 + 1;
        for_each_mut(cfg.exec, &mut particles, |p, part| {
            let mut rng = stream(seed, StreamKey::new(0, p as u64, step, Purpose::Process));
            if let Err(e) = advance(model, &mut part.state, grid, n, up, &mut rng) {
                part.error = Some(e);
                return;
            }
            for u in 0..n_units {
                part.log_dens[u] = match data.get(u, n) {
                    Some(y) => model.dmeasure_unit(y, u, &part.state, &part.last, t, params),
                    None => 0.0,
                };
            }
        });
        take_error(&mut particles)?;

        ancestors.clear();
        let mut mean = means.as_ref().map(|_| StateMatrix::zeros(n_units, model.compartments().len()));
        for (b, block) in blocks.iter().enumerate() {
            for (lw, part) in block_lw.iter_mut().zip(&particles) {
                let s: f64 = block.iter().map(|&u| part.log_dens[u]).sum();
                *lw = if s.is_nan() { LOG_WEIGHT_FLOOR } else { s.max(LOG_WEIGHT_FLOOR) };
            }
            let max = block_lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max <= LOG_WEIGHT_FLOOR {
                result.cond_loglik[b][n] = f64::NEG_INFINITY;
                result.failure = Some(FailurePoint { time: n, block: b });
                let mut out = result.finish();
                out.loglik_total = f64::NEG_INFINITY;
                return Ok(out);
            }
            result.cond_loglik[b][n] = log_mean_exp(&block_lw);
            for (w, lw) in weights.iter_mut().zip(&block_lw) {
                *w = (lw - max).exp();
            }
            result.ess[b][n] = effective_sample_size(&weights);
            if let Some(m) = mean.as_mut() {
                accumulate_mean(m, block, &particles, &weights);
            }
            let u0: f64 = stream(seed, StreamKey::new(0, b as u64, step, Purpose::Resample)).random();
            ancestors.push(systematic_resample(&weights, u0));
        }
        if let (Some(ms), Some(m)) = (means.as_mut(), mean) {
            ms.push(m);
        }

        let parents: Vec<StateMatrix> = particles.iter().map(|p| p.state.clone()).collect();
        for_each_mut(cfg.exec, &mut particles, |p, part| {
            for (block, anc) in blocks.iter().zip(&ancestors) {
                let src = &parents[anc[p]];
                for &u in block {
                    part.state.copy_unit_from(u, src);
                }
            }
            part.last.clone_from(&part.state);
        });
    }

    result.filter_mean = means;
    Ok(result.finish())
}

fn accumulate_mean(mean: &mut StateMatrix, block: &[usize], particles: &[Particle], weights: &[f64]) {
    let total: f64 = weights.iter().sum();
    for (part, w) in particles.iter().zip(weights) {
        let w = w / total;
        for &u in block {
            for (m, x) in mean.unit_mut(u).iter_mut().zip(part.state.unit(u)) {
                *m += w * x;
            }
        }
    }
}

fn take_error(particles: &mut [Particle]) -> Result<()> {
    match particles.iter_mut().find_map(|p| p.error.take()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub(crate) fn check_inputs(
    n_units: usize,
    data: &ObservationPanel,
    blocks: &[Vec<usize>],
    particles: usize,
) -> Result<()> {
    if particles < 2 {
        return Err(invalid(format!("filters need at least 2 particles, got {particles}")));
    }
    if data.n_units() != n_units {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_units} units of data"),
            found: data.n_units().to_string(),
        });
    }
    validate_partition(n_units, blocks)
}
