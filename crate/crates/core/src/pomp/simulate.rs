use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::model::{advance, SpatPompModel, UnitParams};
use super::panel::ObservationPanel;
use super::state::StateMatrix;
use crate::error::{invalid, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::rng::{stream, Purpose, StreamKey};
use crate::stats::quantile_sorted;

/// One simulated replicate: latent states and observations at every observation time.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<StateMatrix>,
    pub observations: ObservationPanel,
}

/// Simulates `n_reps` independent replicates. Replicate `r` draws only from streams keyed by `r`.
pub fn simulate<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    grid: &TimeGrid,
    n_reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<Simulation>> {
    if n_reps == 0 {
        return Err(invalid("simulate needs at least one replicate"));
    }
    try_map_indexed(exec, n_reps, |r| simulate_one(model, params, grid, r as u64, seed))
}

fn simulate_one<M: SpatPompModel>(
    model: &M,
    params: &M::Params,
    grid: &TimeGrid,
    rep: u64,
    seed: u64,
) -> Result<Simulation> {
    let up = UnitParams::shared(params);
    let n_units = model.n_units();
    let mut state = model.rinit(up, &mut stream(seed, StreamKey::new(rep, 0, 0, Purpose::Init)))?;
    let mut last = state.clone();
    let mut states = Vec::with_capacity(grid.len());
    let mut rows = vec![Vec::with_capacity(grid.len()); n_units];
    for (n, &t) in grid.obs_times().iter().enumerate() {
        let mut rng = stream(seed, StreamKey::new(rep, 0, n as u64, Purpose::Process));
        advance(model, &mut state, grid, n, up, &mut rng)?;
        let mut mrng = stream(seed, StreamKey::new(rep, 0, n as u64, Purpose::Measure));
        for (u, row) in rows.iter_mut().enumerate() {
            row.push(Some(model.rmeasure_unit(u, &state, &last, t, params, &mut mrng)));
        }
        states.push(state.clone());
        last.clone_from(&state);
    }
    Ok(Simulation {
        states,
        observations: ObservationPanel::new(rows, grid.clone())?,
    })
}

/// Pointwise empirical quantiles of simulated observations, indexed `[unit][time][prob]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileSummary {
    pub probs: Vec<f64>,
    pub values: Vec<Vec<Vec<f64>>>,
}

pub fn percentile_summary(panels: &[&ObservationPanel], probs: &[f64]) -> Result<PercentileSummary> {
    if panels.len() < 2 {
        return Err(invalid(format!(
            "percentile summary needs at least two simulations, got {}",
            panels.len()
        )));
    }
    if probs.is_empty() || probs.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(invalid("quantile levels must lie strictly inside (0, 1)"));
    }
    let (n_units, n_times) = (panels[0].n_units(), panels[0].n_times());
    if panels.iter().any(|p| p.n_units() != n_units || p.n_times() != n_times) {
        return Err(invalid("simulations have differing shapes"));
    }
    let mut values = vec![vec![Vec::with_capacity(probs.len()); n_times]; n_units];
    let mut cell = Vec::with_capacity(panels.len());
    for (u, unit_vals) in values.iter_mut().enumerate() {
        for (n, out) in unit_vals.iter_mut().enumerate() {
            cell.clear();
            cell.extend(panels.iter().filter_map(|p| p.get(u, n)));
            cell.sort_by(f64::total_cmp);
            out.extend(probs.iter().map(|&p| {
                if cell.is_empty() {
                    f64::NAN
                } else {
                    quantile_sorted(&cell, p)
                }
            }));
        }
    }
    Ok(PercentileSummary {
        probs: probs.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(vals: &[f64]) -> ObservationPanel {
        let g = TimeGrid::daily(0.0, vals.len(), 1.0).unwrap();
        ObservationPanel::new(vec![vals.iter().map(|&x| Some(x)).collect()], g).unwrap()
    }

    #[test]
    fn median_of_three() {
        let (a, b, c) = (panel(&[1.0]), panel(&[3.0]), panel(&[2.0]));
        let s = percentile_summary(&[&a, &b, &c], &[0.5]).unwrap();
        assert_eq!(s.values[0][0][0], 2.0);
    }

    #[test]
    fn identical_replicates() {
        let a = panel(&[4.0, 7.0]);
        let s = percentile_summary(&[&a, &a, &a], &[0.1, 0.5, 0.9]).unwrap();
        assert!(s.values[0].iter().zip([4.0, 7.0]).all(|(q, v)| q.iter().all(|x| *x == v)));
    }

    #[test]
    fn rejects_empty_and_bad_probs() {
        assert!(percentile_summary(&[], &[0.5]).is_err());
        let a = panel(&[1.0]);
        assert!(percentile_summary(&[&a, &a], &[1.0]).is_err());
    }

    #[test]
    fn uniform_deciles() {
        use rand::Rng;
        let mut rng = stream(5, StreamKey::new(0, 0, 0, Purpose::Process));
        let panels: Vec<_> = (0..1000).map(|_| panel(&[rng.random::<f64>()])).collect();
        let refs: Vec<_> = panels.iter().collect();
        let s = percentile_summary(&refs, &[0.1, 0.9]).unwrap();
        assert!((s.values[0][0][0] - 0.1).abs() < 0.05);
        assert!((s.values[0][0][1] - 0.9).abs() < 0.05);
    }
}
