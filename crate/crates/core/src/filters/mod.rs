//! Likelihood evaluation by filtering.
//!
//! All filters report the log-likelihood as a sum of conditional
//! log-likelihoods indexed by block and observation time. The particle
//! filter is the block filter with a single block; the ensemble Kalman
//! filter reports one joint block.

mod block;
pub mod compare;
pub mod enkf;
pub mod resample;

use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::pomp::StateMatrix;

pub use block::{block_particle_filter, particle_filter};
pub use compare::{compare_filters, ComparisonRow, FilterKind, FilterSpec};
pub use enkf::{enkf, enkf_variance_floor, VarianceFloor};

/// Per-block log-weights are floored here before exponentiation.
pub const LOG_WEIGHT_FLOOR: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub particles: usize,
    pub seed: u64,
    pub exec: Execution,
    /// Record the weighted filtering mean at every observation time.
    pub keep_filter_mean: bool,
}

impl FilterConfig {
    pub fn new(particles: usize, seed: u64) -> Self {
        Self {
            particles,
            seed,
            exec: Execution::default(),
            keep_filter_mean: false,
        }
    }

    pub fn with_exec(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_filter_mean(mut self) -> Self {
        self.keep_filter_mean = true;
        self
    }
}

/// Where a filter ran out of particles with non-negligible weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailurePoint {
    pub time: usize,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub loglik_total: f64,
    /// `cond_loglik[block][time]`.
    pub cond_loglik: Vec<Vec<f64>>,
    /// Effective sample size, `ess[block][time]`.
    pub ess: Vec<Vec<f64>>,
    #[serde(skip)]
    pub filter_mean: Option<Vec<StateMatrix>>,
    pub seed: u64,
    pub failure: Option<FailurePoint>,
    pub warnings: Vec<String>,
}

impl FilterResult {
    pub(crate) fn new(n_blocks: usize, n_times: usize, seed: u64) -> Self {
        Self {
            loglik_total: 0.0,
            cond_loglik: vec![vec![0.0; n_times]; n_blocks],
            ess: vec![vec![f64::NAN; n_times]; n_blocks],
            filter_mean: None,
            seed,
            failure: None,
            warnings: Vec::new(),
        }
    }

    /// Sums the conditional log-likelihoods block by block, time by time.
    pub(crate) fn finish(mut self) -> Self {
        self.loglik_total = self.cond_loglik.iter().flatten().sum();
        self
    }

    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    pub fn n_blocks(&self) -> usize {
        self.cond_loglik.len()
    }

    pub fn n_times(&self) -> usize {
        self.cond_loglik.first().map_or(0, Vec::len)
    }
}
