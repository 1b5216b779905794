use serde::{Deserialize, Serialize};

/// Per-unit compartment values at one time, stored unit-major (`U × K`).
///
/// Particle filters keep integral counts here; the ensemble Kalman filter
/// lets them become real-valued after its linear update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    n_units: usize,
    n_comp: usize,
    values: Vec<f64>,
}

impl StateMatrix {
    pub fn zeros(n_units: usize, n_comp: usize) -> Self {
        Self {
            n_units,
            n_comp,
            values: vec![0.0; n_units * n_comp],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n_units = rows.len();
        let n_comp = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_comp), "ragged state rows");
        Self {
            n_units,
            n_comp,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    #[inline]
    pub fn get(&self, u: usize, k: usize) -> f64 {
        self.values[u * self.n_comp + k]
    }

    #[inline]
    pub fn set(&mut self, u: usize, k: usize, x: f64) {
        self.values[u * self.n_comp + k] = x;
    }

    #[inline]
    pub fn unit(&self, u: usize) -> &[f64] {
        &self.values[u * self.n_comp..(u + 1) * self.n_comp]
    }

    #[inline]
    pub fn unit_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.values[u * self.n_comp..(u + 1) * self.n_comp]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Copies unit `u`'s row from `src`.
    #[inline]
    pub fn copy_unit_from(&mut self, u: usize, src: &StateMatrix) {
        self.unit_mut(u).copy_from_slice(src.unit(u));
    }

    pub fn all_non_negative(&self) -> bool {
        self.values.iter().all(|&x| x >= 0.0)
    }
}
