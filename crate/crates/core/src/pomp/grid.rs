use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Observation times and the Euler sub-step used between them (days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    obs_times: Vec<f64>,
    dt: f64,
}

/// Default process sub-step: four Euler steps per day.
pub const DEFAULT_DT: f64 = 0.25;

impl TimeGrid {
    pub fn new(t0: f64, obs_times: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if obs_times.is_empty() {
            return Err(invalid("time grid needs at least one observation time"));
        }
        if obs_times[0] <= t0 {
            return Err(invalid(format!(
                "first observation time {} must exceed t0 = {t0}",
                obs_times[0]
            )));
        }
        let mut prev = t0;
        for &t in &obs_times {
            if t <= prev {
                return Err(invalid(format!(
                    "observation times must be strictly increasing ({prev} then {t})"
                )));
            }
            let steps = (t - prev) / dt;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(invalid(format!(
                    "interval ({prev}, {t}] is not a multiple of dt = {dt}"
                )));
            }
            prev = t;
        }
        Ok(Self { t0, obs_times, dt })
    }

    /// Daily observations at `t0 + 1, ..., t0 + n`.
    pub fn daily(t0: f64, n: usize, dt: f64) -> Result<Self> {
        Self::new(t0, (1..=n).map(|k| t0 + k as f64).collect(), dt)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn obs_times(&self) -> &[f64] {
        &self.obs_times
    }

    pub fn len(&self) -> usize {
        self.obs_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_times.is_empty()
    }

    /// Start of the interval ending at observation `n`.
    pub fn interval_start(&self, n: usize) -> f64 {
        if n == 0 {
            self.t0
        } else {
            self.obs_times[n - 1]
        }
    }

    /// Sub-step start times covering `(t_{n-1}, t_n]`.
    pub fn substeps(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let start = self.interval_start(n);
        let k = ((self.obs_times[n] - start) / self.dt).round() as usize;
        (0..k).map(move |i| start + i as f64 * self.dt)
    }
}

/// Spatial units and the block partition used by block filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitGraph {
    names: Vec<String>,
    blocks: Vec<Vec<usize>>,
}

impl UnitGraph {
    /// One unit per block.
    pub fn new(names: Vec<String>) -> Result<Self> {
        let blocks = (0..names.len()).map(|u| vec![u]).collect();
        Self::with_blocks(names, blocks)
    }

    pub fn with_blocks(names: Vec<String>, blocks: Vec<Vec<usize>>) -> Result<Self> {
        if names.is_empty() {
            return Err(invalid("a unit graph needs at least one unit"));
        }
        validate_partition(names.len(), &blocks)?;
        Ok(Self { names, blocks })
    }

    pub fn n_units(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Checks that `blocks` are disjoint, non-empty and cover `0..n_units`.
pub fn validate_partition(n_units: usize, blocks: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n_units];
    for b in blocks {
        if b.is_empty() {
            return Err(invalid("empty block in partition"));
        }
        for &u in b {
            if u >= n_units {
                return Err(invalid(format!("block refers to unit {u} of {n_units}")));
            }
            if std::mem::replace(&mut seen[u], true) {
                return Err(invalid(format!("unit {u} appears in more than one block")));
            }
        }
    }
    if let Some(u) = seen.iter().position(|s| !s) {
        return Err(invalid(format!("unit {u} is not in any block")));
    }
    Ok(())
}

/// One block per unit.
pub fn unit_blocks(n_units: usize) -> Vec<Vec<usize>> {
    (0..n_units).map(|u| vec![u]).collect()
}

/// A single block holding every unit.
pub fn single_block(n_units: usize) -> Vec<Vec<usize>> {
    vec![(0..n_units).collect()]
}
