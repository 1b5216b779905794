//! Day-indexed city-to-city movement rates.
//!
//! Flows are persons per day from a row unit to a column unit, piecewise
//! constant within each day. Each origin keeps a short sparse list of
//! destinations, which is what recorded top-k outflow data looks like.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityTensor {
    n_units: usize,
    /// `days[d][from]` lists `(to, flow)` sorted by destination.
    days: Vec<Vec<Vec<(usize, f64)>>>,
}

impl MobilityTensor {
    /// A tensor with no movement at all.
    pub fn empty(n_units: usize, n_days: usize) -> Self {
        Self {
            n_units,
            days: vec![vec![Vec::new(); n_units]; n_days.max(1)],
        }
    }

    /// Builds a tensor from `(day, from, to, flow)` records. Self-flows are dropped;
    /// repeated records for the same cell are summed.
    pub fn from_records(
        n_units: usize,
        n_days: usize,
        records: impl IntoIterator<Item = (usize, usize, usize, f64)>,
    ) -> Result<Self> {
        let mut cells: Vec<BTreeMap<(usize, usize), f64>> = vec![BTreeMap::new(); n_days.max(1)];
        for (d, from, to, flow) in records {
            if d >= n_days || from >= n_units || to >= n_units {
                return Err(invalid(format!(
                    "mobility record (day {d}, {from} -> {to}) outside {n_days} days × {n_units} units"
                )));
            }
            if !(flow >= 0.0 && flow.is_finite()) {
                return Err(invalid(format!(
                    "mobility flow must be non-negative, got {flow} on day {d} for {from} -> {to}"
                )));
            }
            if from != to {
                *cells[d].entry((from, to)).or_insert(0.0) += flow;
            }
        }
        let days = cells
            .into_iter()
            .map(|day| {
                let mut rows = vec![Vec::new(); n_units];
                for ((from, to), flow) in day {
                    rows[from].push((to, flow));
                }
                rows
            })
            .collect();
        Ok(Self { n_units, days })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Day index in force at time `t` (days since the start of the tensor),
    /// held constant beyond either end.
    #[inline]
    pub fn day_index(&self, t: f64) -> usize {
        if t <= 0.0 {
            0
        } else {
            (t.floor() as usize).min(self.days.len() - 1)
        }
    }

    /// Outflows from `from` on day `d`, sorted by destination.
    #[inline]
    pub fn row(&self, d: usize, from: usize) -> &[(usize, f64)] {
        &self.days[d][from]
    }

    pub fn flow(&self, d: usize, from: usize, to: usize) -> f64 {
        let row = self.row(d, from);
        row.binary_search_by_key(&to, |&(j, _)| j)
            .map_or(0.0, |i| row[i].1)
    }

    pub fn out_total(&self, d: usize, from: usize) -> f64 {
        self.row(d, from).iter().map(|&(_, f)| f).sum()
    }

    /// Every stored `(day, from, to, flow)`.
    pub fn records(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.days.iter().enumerate().flat_map(|(d, rows)| {
            rows.iter()
                .enumerate()
                .flat_map(move |(from, row)| row.iter().map(move |&(to, f)| (d, from, to, f)))
        })
    }
}

/// Flow observations with gaps: for each `(from, to)` pair, the days it was recorded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialFlows {
    pub n_units: usize,
    pub n_days: usize,
    pub pairs: BTreeMap<(usize, usize), BTreeMap<usize, f64>>,
}

impl PartialFlows {
    pub fn new(n_units: usize, n_days: usize) -> Self {
        Self {
            n_units,
            n_days,
            pairs: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, day: usize, from: usize, to: usize, flow: f64) {
        self.pairs.entry((from, to)).or_default().insert(day, flow);
    }
}

/// Fills each pair's missing days by linear interpolation between the nearest
/// recorded days, holding the first/last recorded value beyond the ends.
pub fn interpolate_missing_flows(partial: &PartialFlows) -> Result<MobilityTensor> {
    let mut records = Vec::new();
    for (&(from, to), obs) in &partial.pairs {
        let known: Vec<(usize, f64)> = obs.iter().map(|(&d, &f)| (d, f)).collect();
        if known.is_empty() {
            continue;
        }
        for d in 0..partial.n_days {
            let flow = match known.binary_search_by_key(&d, |&(k, _)| k) {
                Ok(i) => known[i].1,
                Err(0) => known[0].1,
                Err(i) if i == known.len() => known[i - 1].1,
                Err(i) => {
                    let (d0, f0) = known[i - 1];
                    let (d1, f1) = known[i];
                    f0 + (f1 - f0) * (d - d0) as f64 / (d1 - d0) as f64
                }
            };
            records.push((d, from, to, flow));
        }
    }
    MobilityTensor::from_records(partial.n_units, partial.n_days, records)
}

/// Per-unit coordinates (degrees) and initial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoTable {
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub population: Vec<f64>,
}

impl GeoTable {
    pub fn new(lat: Vec<f64>, lon: Vec<f64>, population: Vec<f64>) -> Result<Self> {
        if lat.len() != lon.len() || lat.len() != population.len() {
            return Err(invalid("geo table columns have differing lengths"));
        }
        for u in 0..lat.len() {
            if !(lat[u].abs() <= 90.0 && lon[u].abs() <= 180.0) {
                return Err(invalid(format!("unit {u}: coordinates ({}, {}) out of range", lat[u], lon[u])));
            }
            if !(population[u] > 0.0 && population[u].is_finite()) {
                return Err(invalid(format!("unit {u}: population must be positive, got {}", population[u])));
            }
        }
        Ok(Self { lat, lon, population })
    }

    pub fn n_units(&self) -> usize {
        self.lat.len()
    }

    pub fn distance(&self, u: usize, j: usize) -> f64 {
        great_circle_distance((self.lat[u], self.lon[u]), (self.lat[j], self.lon[j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityConfig {
    /// Mobility correction factor.
    pub factor: f64,
}

impl Default for GravityConfig {
    fn default() -> Self {
        Self { factor: 20.0 }
    }
}

/// Adds gravity-model movement `F·d̄/P̄ · P_u·P_j / d_uj` to every ordered pair `u ≠ j` on every day.
///
/// `d̄` is the mean distance over unordered pairs and `P̄` the mean population.
pub fn gravity_adjust(base: &MobilityTensor, geo: &GeoTable, cfg: &GravityConfig) -> Result<MobilityTensor> {
    let n = base.n_units();
    if geo.n_units() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} units in geo table"),
            found: geo.n_units().to_string(),
        });
    }
    if !(cfg.factor >= 0.0) {
        return Err(invalid(format!("gravity factor must be non-negative, got {}", cfg.factor)));
    }
    if cfg.factor == 0.0 || n < 2 {
        return Ok(base.clone());
    }
    let mut dist = vec![0.0; n * n];
    let mut total = 0.0;
    for u in 0..n {
        for j in (u + 1)..n {
            let d = geo.distance(u, j);
            if d <= 0.0 {
                return Err(Error::CoincidentUnits(u, j));
            }
            dist[u * n + j] = d;
            dist[j * n + u] = d;
            total += d;
        }
    }
    let d_bar = total / (n * (n - 1) / 2) as f64;
    let p_bar = geo.population.iter().sum::<f64>() / n as f64;

    let days = base
        .days
        .iter()
        .map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(u, row)| {
                    let mut dense = vec![0.0; n];
                    for &(j, f) in row {
                        dense[j] = f;
                    }
                    (0..n)
                        .filter(|&j| j != u)
                        .map(|j| {
                            let add = gravity_increment(cfg.factor, d_bar, p_bar, geo.population[u], geo.population[j], dist[u * n + j]);
                            (j, dense[j] + add)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(MobilityTensor { n_units: n, days })
}

/// The gravity term added to a single ordered pair.
#[inline]
pub fn gravity_increment(factor: f64, d_bar: f64, p_bar: f64, p_u: f64, p_j: f64, d_uj: f64) -> f64 {
    factor * d_bar / p_bar * p_u * p_j / d_uj
}

/// Total travel into and out of one unit over all days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitConnectivity {
    pub total_in: f64,
    pub total_out: f64,
    /// No arriving travellers on any day.
    pub isolated: bool,
}

pub fn connectivity_check(tensor: &MobilityTensor) -> Vec<UnitConnectivity> {
    let n = tensor.n_units();
    let mut total_in = vec![0.0; n];
    let mut total_out = vec![0.0; n];
    for (_, from, to, f) in tensor.records() {
        total_out[from] += f;
        total_in[to] += f;
    }
    (0..n)
        .map(|u| UnitConnectivity {
            total_in: total_in[u],
            total_out: total_out[u],
            isolated: total_in[u] <= 0.0,
        })
        .collect()
}

/// Haversine distance in km between `(lat, lon)` points given in degrees.
pub fn great_circle_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, l1) = (a.0.to_radians(), a.1.to_radians());
    let (p2, l2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((p2 - p1) / 2.0).sin().powi(2) + p1.cos() * p2.cos() * ((l2 - l1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn interpolation_examples() {
        let mut p = PartialFlows::new(2, 3);
        p.record(0, 0, 1, 10.0);
        p.record(2, 0, 1, 20.0);
        let t = interpolate_missing_flows(&p).unwrap();
        assert_eq!(t.flow(1, 0, 1), 15.0);

        let mut p = PartialFlows::new(2, 5);
        p.record(0, 1, 0, 0.0);
        p.record(4, 1, 0, 8.0);
        let t = interpolate_missing_flows(&p).unwrap();
        let got: Vec<f64> = (1..4).map(|d| t.flow(d, 1, 0)).collect();
        assert_eq!(got, vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn interpolation_extrapolates_flat_and_keeps_full_data() {
        let mut p = PartialFlows::new(3, 4);
        for d in 0..4 {
            p.record(d, 0, 2, d as f64 * 1.5 + 1.0);
        }
        p.record(2, 1, 0, 7.0);
        let t = interpolate_missing_flows(&p).unwrap();
        for d in 0..4 {
            assert_eq!(t.flow(d, 0, 2), d as f64 * 1.5 + 1.0);
            assert_eq!(t.flow(d, 1, 0), 7.0);
        }
        assert_eq!(t.flow(0, 2, 1), 0.0);
    }

    fn geo3() -> GeoTable {
        GeoTable::new(
            vec![30.59, 39.90, 31.23],
            vec![114.30, 116.40, 121.47],
            vec![1.1e7, 2.1e7, 2.4e7],
        )
        .unwrap()
    }

    #[test]
    fn gravity_zero_factor_is_identity() {
        let base = MobilityTensor::from_records(3, 2, [(0, 0, 1, 5.0), (1, 2, 0, 3.0)]).unwrap();
        let out = gravity_adjust(&base, &geo3(), &GravityConfig { factor: 0.0 }).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn gravity_hand_arithmetic() {
        // Two units: d_uj = d̄ necessarily, so added = F·P_u·P_j/P̄.
        let geo = GeoTable::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![2.0e6, 5.0e5]).unwrap();
        let base = MobilityTensor::empty(2, 1);
        let out = gravity_adjust(&base, &geo, &GravityConfig { factor: 20.0 }).unwrap();
        let p_bar = 1.25e6;
        assert_relative_eq!(out.flow(0, 0, 1), 20.0 * 2.0e6 * 5.0e5 / p_bar, max_relative = 1e-12);
        // symmetric case: P_u = P_j = P̄ and d = d̄ gives F·P̄
        let geo = GeoTable::new(vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0e6, 1.0e6]).unwrap();
        let out = gravity_adjust(&base, &geo, &GravityConfig { factor: 20.0 }).unwrap();
        assert_relative_eq!(out.flow(0, 1, 0), 20.0 * 1.0e6, max_relative = 1e-12);
    }

    #[test]
    fn gravity_increment_hand_arithmetic() {
        let d_bar = 850.0;
        assert_relative_eq!(gravity_increment(20.0, d_bar, 1.0e6, 2.0e6, 5.0e5, 2.0 * d_bar), 1.0e7, max_relative = 1e-12);
        assert_relative_eq!(gravity_increment(20.0, d_bar, 1.0e6, 1.0e6, 1.0e6, d_bar), 2.0e7, max_relative = 1e-12);
    }

    #[test]
    fn gravity_three_units_match_increment() {
        let geo = geo3();
        let out = gravity_adjust(&MobilityTensor::empty(3, 1), &geo, &GravityConfig { factor: 20.0 }).unwrap();
        let d = |u, j| geo.distance(u, j);
        let d_bar = (d(0, 1) + d(0, 2) + d(1, 2)) / 3.0;
        let p_bar = geo.population.iter().sum::<f64>() / 3.0;
        let expect = gravity_increment(20.0, d_bar, p_bar, geo.population[2], geo.population[0], d(2, 0));
        assert_relative_eq!(out.flow(0, 2, 0), expect, max_relative = 1e-12);
    }

    #[test]
    fn gravity_rejects_coincident_units() {
        let geo = GeoTable::new(vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0]).unwrap();
        let err = gravity_adjust(&MobilityTensor::empty(2, 1), &geo, &GravityConfig::default()).unwrap_err();
        assert_eq!(err, Error::CoincidentUnits(0, 1));
    }

    #[test]
    fn connectivity() {
        let t = MobilityTensor::empty(3, 4);
        assert!(connectivity_check(&t).iter().all(|c| c.isolated));
        let adj = gravity_adjust(&t, &geo3(), &GravityConfig::default()).unwrap();
        assert!(connectivity_check(&adj).iter().all(|c| !c.isolated && c.total_in > 0.0));
    }

    #[test]
    fn haversine_examples() {
        assert_eq!(great_circle_distance((12.0, 34.0), (12.0, 34.0)), 0.0);
        assert_relative_eq!(great_circle_distance((0.0, 0.0), (0.0, 180.0)), 20_015.086_796_020_57, max_relative = 1e-12);
        // arbitrary-precision haversine: 1052.548 km
        let d = great_circle_distance((30.59, 114.30), (39.90, 116.40));
        assert!((d - 1052.548).abs() < 0.01, "{d}");
    }

    proptest! {
        #[test]
        fn interpolation_exact_on_affine(a in -5.0f64..5.0, b in 0.0f64..100.0, keep in prop::collection::vec(any::<bool>(), 8)) {
            let mut p = PartialFlows::new(2, 8);
            let f = |d: usize| (b + a * d as f64).max(0.0) ;
            // only use slopes that stay non-negative over the window
            prop_assume!(b + a * 7.0 >= 0.0);
            let mut any = false;
            for (d, &k) in keep.iter().enumerate() {
                if k || (d == 0) || (d == 7) { p.record(d, 0, 1, f(d)); any = true; }
            }
            prop_assert!(any);
            let t = interpolate_missing_flows(&p).unwrap();
            for d in 0..8 {
                prop_assert!((t.flow(d, 0, 1) - f(d)).abs() < 1e-9);
            }
        }

        #[test]
        fn gravity_monotone(flows in prop::collection::vec(0.0f64..1e4, 6), factor in 0.01f64..50.0) {
            let recs = [(0,1),(0,2),(1,0),(1,2),(2,0),(2,1)].iter().zip(&flows).map(|(&(u,j),&f)| (0usize,u,j,f));
            let base = MobilityTensor::from_records(3, 1, recs).unwrap();
            let out = gravity_adjust(&base, &geo3(), &GravityConfig { factor }).unwrap();
            for u in 0..3 { for j in 0..3 { if u != j {
                prop_assert!(out.flow(0, u, j) > base.flow(0, u, j));
            }}}
        }
    }
}
