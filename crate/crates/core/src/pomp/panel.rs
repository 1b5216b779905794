use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{invalid, Error, Result};

/// A `U × N` panel of observations on a time grid. `None` marks a missing value.
///
/// Values are stored as `f64` so the same filters serve count models and
/// real-valued test models; count data are integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationPanel {
    n_units: usize,
    values: Vec<Option<f64>>,
    grid: TimeGrid,
}

impl ObservationPanel {
    /// Builds a panel from per-unit rows of length `grid.len()`.
    pub fn new(rows: Vec<Vec<Option<f64>>>, grid: TimeGrid) -> Result<Self> {
        let n = grid.len();
        for (u, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: format!("{n} observations for unit {u}"),
                    found: r.len().to_string(),
                });
            }
            if let Some(x) = r.iter().flatten().find(|x| !x.is_finite()) {
                return Err(invalid(format!("non-finite observation {x} for unit {u}")));
            }
        }
        Ok(Self {
            n_units: rows.len(),
            values: rows.into_iter().flatten().collect(),
            grid,
        })
    }

    /// Like [`ObservationPanel::new`], additionally requiring non-negative integer counts.
    pub fn counts(rows: Vec<Vec<Option<f64>>>, grid: TimeGrid) -> Result<Self> {
        for (u, r) in rows.iter().enumerate() {
            if let Some(x) = r.iter().flatten().find(|x| **x < 0.0 || x.fract() != 0.0) {
                return Err(invalid(format!(
                    "count for unit {u} must be a non-negative integer, got {x}"
                )));
            }
        }
        Self::new(rows, grid)
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_times(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, u: usize, n: usize) -> Option<f64> {
        self.values[u * self.grid.len() + n]
    }

    pub fn row(&self, u: usize) -> &[Option<f64>] {
        let n = self.grid.len();
        &self.values[u * n..(u + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<f64>]> {
        self.values.chunks(self.grid.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_validation() {
        let g = TimeGrid::daily(0.0, 2, 1.0).unwrap();
        assert!(ObservationPanel::counts(vec![vec![Some(1.0), None]], g.clone()).is_ok());
        assert!(ObservationPanel::counts(vec![vec![Some(-1.0), None]], g.clone()).is_err());
        assert!(ObservationPanel::counts(vec![vec![Some(1.5), None]], g.clone()).is_err());
        assert!(ObservationPanel::new(vec![vec![Some(1.0)]], g).is_err());
    }
}
