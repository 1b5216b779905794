//! Synthetic metapopulations for tests, benchmarks and filter comparisons.

use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::mobility::{GeoTable, MobilityTensor};
use crate::pomp::{simulate, ObservationPanel, TimeGrid, DEFAULT_DT};
use crate::rng::{stream, Purpose, StreamKey};
use crate::seair::{SeairModel, SeairParams};
use crate::Execution;

#[derive(Debug, Clone)]
pub struct SyntheticNetwork {
    pub names: Vec<String>,
    pub geo: GeoTable,
    pub mobility: MobilityTensor,
}

/// `n_units` cities scattered around a hub (unit 0), with gravity-shaped daily
/// travel of about `travel_fraction` of each population, cut by 90% from
/// `lockdown_day` onward.
pub fn synthetic_network(
    n_units: usize,
    n_days: usize,
    travel_fraction: f64,
    lockdown_day: usize,
    seed: u64,
) -> Result<SyntheticNetwork> {
    if n_units == 0 || n_days == 0 {
        return Err(invalid("synthetic network needs at least one unit and one day"));
    }
    let mut rng = stream(seed, StreamKey::new(0, 0, 0, Purpose::Replicate));
    let mut lat = vec![30.6];
    let mut lon = vec![114.3];
    let mut pop = vec![2.0e6];
    for _ in 1..n_units {
        let r: f64 = rng.random_range(0.5..4.0);
        let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        lat.push(30.6 + r * a.sin());
        lon.push(114.3 + r * a.cos());
        pop.push((rng.random_range(1.0e5..1.0e6f64)).round());
    }
    let geo = GeoTable::new(lat, lon, pop)?;

    let mut records = Vec::new();
    for u in 0..n_units {
        let pull: Vec<f64> = (0..n_units)
            .map(|j| if j == u { 0.0 } else { geo.population[j] / geo.distance(u, j).powi(2) })
            .collect();
        let total: f64 = pull.iter().sum();
        if total <= 0.0 {
            continue;
        }
        for (j, w) in pull.iter().enumerate() {
            let base = travel_fraction * geo.population[u] * w / total;
            for d in 0..n_days {
                let f = if d >= lockdown_day { 0.1 * base } else { base };
                if f > 0.0 {
                    records.push((d, u, j, f.round()));
                }
            }
        }
    }
    let mobility = MobilityTensor::from_records(n_units, n_days, records)?;
    Ok(SyntheticNetwork {
        names: (0..n_units).map(|u| format!("city{u:03}")).collect(),
        geo,
        mobility,
    })
}

/// Parameters used for synthetic SEAIR experiments.
pub fn synthetic_params() -> SeairParams {
    SeairParams {
        e0: 300.0,
        ..SeairParams::fitted_constrained()
    }
}

/// A SEAIR model on a synthetic network plus one simulated case panel.
pub struct SyntheticSeair {
    pub network: SyntheticNetwork,
    pub model: SeairModel,
    pub params: SeairParams,
    pub data: ObservationPanel,
}

pub fn synthetic_seair(n_units: usize, n_days: usize, seed: u64) -> Result<SyntheticSeair> {
    let network = synthetic_network(n_units, n_days, 0.01, 14, seed)?;
    let model = SeairModel::new(network.geo.population.clone(), Arc::new(network.mobility.clone()), 0)?;
    let params = synthetic_params();
    let grid = TimeGrid::daily(0.0, n_days, DEFAULT_DT)?;
    let sim = simulate(&model, &params, &grid, 1, seed, Execution::Sequential)?;
    let data = sim.into_iter().next().expect("one replicate").observations;
    Ok(SyntheticSeair {
        network,
        model,
        params,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mobility::connectivity_check;

    #[test]
    fn network_is_connected_and_deterministic() {
        let a = synthetic_network(6, 10, 0.01, 5, 3).unwrap();
        let b = synthetic_network(6, 10, 0.01, 5, 3).unwrap();
        assert_eq!(a.geo, b.geo);
        assert!(connectivity_check(&a.mobility).iter().all(|c| !c.isolated));
        let out0 = a.mobility.out_total(0, 0);
        assert!((out0 - 0.01 * 2.0e6).abs() < 10.0);
        assert!(a.mobility.out_total(6, 0) < 0.11 * out0);
    }

    #[test]
    fn seair_panel_shape() {
        let s = synthetic_seair(3, 12, 1).unwrap();
        assert_eq!((s.data.n_units(), s.data.n_times()), (3, 12));
        assert!(s.data.rows().flatten().all(|y| y.unwrap() >= 0.0));
    }
}
