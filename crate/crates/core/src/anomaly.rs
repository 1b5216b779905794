//! Log-likelihood anomalies: mechanistic minus benchmark conditional log-likelihood per observation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyMatrix {
    /// `values[unit][time]`.
    pub values: Vec<Vec<f64>>,
    pub model_label: String,
    pub benchmark_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outlier {
    pub unit: usize,
    pub time: usize,
    pub anomaly: f64,
}

fn check_shape(name: &str, m: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows} x {cols}"),
            found: format!("{name} with {} rows", m.len()),
        });
    }
    Ok(())
}

/// Element-wise `model_cond - bench_cond`.
///
/// `model_cond` must come from a filter run with one unit per block, so its
/// rows line up with units.
pub fn anomalies(
    model_cond: &[Vec<f64>],
    bench_cond: &[Vec<f64>],
    model_label: &str,
    benchmark_label: &str,
) -> Result<AnomalyMatrix> {
    let rows = bench_cond.len();
    let cols = bench_cond.first().map_or(0, Vec::len);
    check_shape("benchmark", bench_cond, rows, cols)?;
    check_shape("model", model_cond, rows, cols)?;
    let values = model_cond
        .iter()
        .zip(bench_cond)
        .map(|(m, b)| m.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    Ok(AnomalyMatrix {
        values,
        model_label: model_label.to_string(),
        benchmark_label: benchmark_label.to_string(),
    })
}

impl AnomalyMatrix {
    pub fn n_units(&self) -> usize {
        self.values.len()
    }

    pub fn n_times(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().flatten().sum()
    }

    /// The `k` most negative cells, ascending; `-inf` first, ties by (unit, time).
    pub fn top_outliers(&self, k: usize) -> Result<Vec<Outlier>> {
        if k == 0 {
            return Err(invalid("top_outliers needs k >= 1"));
        }
        let mut cells: Vec<Outlier> = self
            .values
            .iter()
            .enumerate()
            .flat_map(|(unit, row)| {
                row.iter()
                    .enumerate()
                    .map(move |(time, &anomaly)| Outlier { unit, time, anomaly })
            })
            .collect();
        cells.sort_by(|a, b| {
            a.anomaly
                .total_cmp(&b.anomaly)
                .then(a.unit.cmp(&b.unit))
                .then(a.time.cmp(&b.time))
        });
        cells.truncate(k);
        Ok(cells)
    }
}
