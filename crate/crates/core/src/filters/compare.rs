use serde::{Deserialize, Serialize};

use super::{block_particle_filter, enkf, particle_filter, FilterConfig};
use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::pomp::{unit_blocks, ObservationPanel, SpatPompModel};
use crate::rng::derive_seed;
use crate::stats::{mean, std_error};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Pf,
    /// Block filter; `None` means one unit per block.
    Bpf(Option<Vec<Vec<usize>>>),
    Enkf,
}

impl FilterKind {
    pub fn label(&self) -> &'static str {
        match self {
            FilterKind::Pf => "PF",
            FilterKind::Bpf(_) => "BPF",
            FilterKind::Enkf => "EnKF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub particles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub filter: String,
    pub particles: usize,
    pub mean_loglik: f64,
    pub se: f64,
    pub logliks: Vec<f64>,
    /// Replicate errors, kept rather than aborting the comparison.
    pub errors: Vec<String>,
}

/// Runs every filter spec `reps` times with distinct seeds and summarizes the log-likelihoods.
pub fn compare_filters<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    data: &ObservationPanel,
    specs: &[FilterSpec],
    reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ComparisonRow>> {
    if reps == 0 {
        return Err(invalid("compare_filters needs at least one replicate"));
    }
    let rows = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut logliks = Vec::with_capacity(reps);
            let mut errors = Vec::new();
            for r in 0..reps {
                let cfg = FilterConfig::new(spec.particles, derive_seed(seed, &[i as u64, r as u64])).with_exec(exec);
                let out = match &spec.kind {
                    FilterKind::Pf => particle_filter(model, params, data, &cfg),
                    FilterKind::Bpf(blocks) => {
                        let blocks = blocks.clone().unwrap_or_else(|| unit_blocks(model.n_units()));
                        block_particle_filter(model, params, data, &blocks, &cfg)
                    }
                    FilterKind::Enkf => enkf(model, params, data, &cfg),
                };
                match out {
                    Ok(res) => logliks.push(res.loglik_total),
                    Err(e) => errors.push(e.to_string()),
                }
            }
            ComparisonRow {
                filter: spec.kind.label().to_string(),
                particles: spec.particles,
                mean_loglik: if logliks.is_empty() { f64::NAN } else { mean(&logliks) },
                se: std_error(&logliks),
                logliks,
                errors,
            }
        })
        .collect();
    Ok(rows)
}
