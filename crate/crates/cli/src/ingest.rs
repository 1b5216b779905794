//! CSV ingestion and validation.
//!
//! Schemas (headers required, column order free):
//! - cases: `date,unit,cases` with ISO dates; empty or `NA` cases are missing
//! - geo: `unit,lat,lon,population`; its row order fixes unit order
//! - mobility: `day,from,to,flow` with 0-based day index from the first case date
//! - population (optional): `unit,population`, overriding the geo column
//!
//! Model time 0 is the day before the first case date, so the report for
//! date `d` is observed at time `d - first + 1`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use spatpomp::mobility::{connectivity_check, interpolate_missing_flows, GeoTable, MobilityTensor, PartialFlows};
use spatpomp::pomp::{ObservationPanel, TimeGrid, DEFAULT_DT};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub units: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub panel: ObservationPanel,
    pub geo: GeoTable,
    pub mobility: MobilityTensor,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub units: usize,
    pub days: usize,
    pub first_date: String,
    pub last_date: String,
    pub missing_cells: usize,
    pub mobility_records: usize,
    pub isolated_units: Vec<String>,
}

#[derive(Deserialize)]
struct GeoRow {
    unit: String,
    lat: f64,
    lon: f64,
    population: f64,
}

#[derive(Deserialize)]
struct CaseRow {
    date: String,
    unit: String,
    cases: String,
}

#[derive(Deserialize)]
struct MobilityRow {
    day: usize,
    from: String,
    to: String,
    flow: f64,
}

#[derive(Deserialize)]
struct PopulationRow {
    unit: String,
    population: f64,
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::user(format!("cannot open {}: {e}", path.display())))
}

fn rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = reader(path)?;
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::user(format!("{} row {}: {e}", path.display(), i + 2))))
        .collect()
}

fn unknown_units_error(file: &Path, unknown: BTreeSet<String>) -> CliError {
    let list: Vec<String> = unknown.into_iter().collect();
    CliError::user(format!(
        "{}: units not in the geo table: {}",
        file.display(),
        list.join(", ")
    ))
}

/// Unit names in file order plus the geo table.
pub fn read_geo(path: &Path) -> CliResult<(Vec<String>, GeoTable)> {
    let rows: Vec<GeoRow> = rows(path)?;
    if rows.is_empty() {
        return Err(CliError::user(format!("{}: no units", path.display())));
    }
    let mut seen = BTreeSet::new();
    let mut dups = BTreeSet::new();
    for r in &rows {
        if !seen.insert(r.unit.clone()) {
            dups.insert(r.unit.clone());
        }
    }
    if !dups.is_empty() {
        let d: Vec<String> = dups.into_iter().collect();
        return Err(CliError::user(format!("{}: duplicated units: {}", path.display(), d.join(", "))));
    }
    let units = rows.iter().map(|r| r.unit.clone()).collect();
    let geo = GeoTable::new(
        rows.iter().map(|r| r.lat).collect(),
        rows.iter().map(|r| r.lon).collect(),
        rows.iter().map(|r| r.population).collect(),
    )
    .map_err(|e| CliError::user(format!("{}: {e}", path.display())))?;
    Ok((units, geo))
}

fn parse_date(s: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| CliError::user(format!("bad date `{s}`: {e}")))
}

/// Daily dates covering the file and the `U × N` matrix of counts.
pub fn read_cases(path: &Path, units: &[String]) -> CliResult<(Vec<NaiveDate>, Vec<Vec<Option<f64>>>)> {
    let rows: Vec<CaseRow> = rows(path)?;
    if rows.is_empty() {
        return Err(CliError::user(format!("{}: no case rows", path.display())));
    }
    let index: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut unknown = BTreeSet::new();
    let mut cells: BTreeMap<(NaiveDate, usize), Option<f64>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        let date = parse_date(&r.date).map_err(|e| e.context(&format!("{} row {line}", path.display())))?;
        let Some(&u) = index.get(r.unit.as_str()) else {
            unknown.insert(r.unit.clone());
            continue;
        };
        let value = match r.cases.as_str() {
            "" | "NA" | "na" => None,
            s => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| CliError::user(format!("{} row {line}: cases `{s}` is not a number", path.display())))?;
                if v < 0.0 {
                    return Err(CliError::user(format!("{} row {line}: negative count {v}", path.display())));
                }
                if v.fract() != 0.0 || !v.is_finite() {
                    return Err(CliError::user(format!("{} row {line}: count {v} is not an integer", path.display())));
                }
                Some(v)
            }
        };
        if cells.insert((date, u), value).is_some() {
            return Err(CliError::user(format!(
                "{} row {line}: duplicated row for unit {} on {}",
                path.display(),
                r.unit,
                r.date
            )));
        }
    }
    if !unknown.is_empty() {
        return Err(unknown_units_error(path, unknown));
    }
    let first = cells.keys().map(|k| k.0).min().expect("non-empty");
    let last = cells.keys().map(|k| k.0).max().expect("non-empty");
    let n = (last - first).num_days() as usize + 1;
    let dates: Vec<NaiveDate> = first.iter_days().take(n).collect();
    let mut matrix = vec![vec![None; n]; units.len()];
    for ((d, u), v) in cells {
        matrix[u][(d - first).num_days() as usize] = v;
    }
    Ok((dates, matrix))
}

/// Mobility with missing days interpolated per origin-destination pair.
pub fn read_mobility(path: &Path, units: &[String], n_days: usize) -> CliResult<(MobilityTensor, usize)> {
    let rows: Vec<MobilityRow> = rows(path)?;
    let index: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let days = rows.iter().map(|r| r.day + 1).max().unwrap_or(0).max(n_days).max(1);
    let mut partial = PartialFlows::new(units.len(), days);
    let mut unknown = BTreeSet::new();
    let mut seen = BTreeSet::new();
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        let (Some(&from), Some(&to)) = (index.get(r.from.as_str()), index.get(r.to.as_str())) else {
            for name in [&r.from, &r.to] {
                if !index.contains_key(name.as_str()) {
                    unknown.insert(name.clone());
                }
            }
            continue;
        };
        if !(r.flow >= 0.0 && r.flow.is_finite()) {
            return Err(CliError::user(format!("{} row {line}: flow must be non-negative", path.display())));
        }
        if !seen.insert((r.day, from, to)) {
            return Err(CliError::user(format!(
                "{} row {line}: duplicated record {} -> {} on day {}",
                path.display(),
                r.from,
                r.to,
                r.day
            )));
        }
        if from != to {
            partial.record(r.day, from, to, r.flow);
        }
    }
    if !unknown.is_empty() {
        return Err(unknown_units_error(path, unknown));
    }
    Ok((interpolate_missing_flows(&partial)?, rows.len()))
}

pub fn read_population(path: &Path, units: &[String]) -> CliResult<Vec<f64>> {
    let rows: Vec<PopulationRow> = rows(path)?;
    let index: HashMap<&str, usize> = units.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut pop = vec![None; units.len()];
    let mut unknown = BTreeSet::new();
    for (i, r) in rows.iter().enumerate() {
        let Some(&u) = index.get(r.unit.as_str()) else {
            unknown.insert(r.unit.clone());
            continue;
        };
        if !(r.population > 0.0 && r.population.is_finite()) {
            return Err(CliError::user(format!("{} row {}: population must be positive", path.display(), i + 2)));
        }
        if pop[u].replace(r.population).is_some() {
            return Err(CliError::user(format!("{}: duplicated unit {}", path.display(), r.unit)));
        }
    }
    if !unknown.is_empty() {
        return Err(unknown_units_error(path, unknown));
    }
    pop.into_iter()
        .zip(units)
        .map(|(p, u)| p.ok_or_else(|| CliError::user(format!("{}: no population for unit {u}", path.display()))))
        .collect()
}

pub struct Sources<'a> {
    pub geo: &'a Path,
    pub cases: &'a Path,
    pub mobility: Option<&'a Path>,
    pub population: Option<&'a Path>,
}

pub fn ingest(src: &Sources<'_>) -> CliResult<Dataset> {
    let (units, mut geo) = read_geo(src.geo)?;
    if let Some(p) = src.population {
        geo.population = read_population(p, &units)?;
    }
    let (dates, rows) = read_cases(src.cases, &units)?;
    let n = dates.len();
    let missing_cells = rows.iter().flatten().filter(|v| v.is_none()).count();
    let (mobility, mobility_records) = match src.mobility {
        Some(p) => read_mobility(p, &units, n)?,
        None => (MobilityTensor::empty(units.len(), n), 0),
    };
    let grid = TimeGrid::daily(0.0, n, DEFAULT_DT)?;
    let panel = ObservationPanel::counts(rows, grid)?;
    let isolated_units = if units.len() > 1 {
        connectivity_check(&mobility)
            .iter()
            .zip(&units)
            .filter(|(c, _)| c.isolated)
            .map(|(_, u)| u.clone())
            .collect()
    } else {
        Vec::new()
    };
    let report = ValidationReport {
        units: units.len(),
        days: n,
        first_date: dates[0].to_string(),
        last_date: dates[n - 1].to_string(),
        missing_cells,
        mobility_records,
        isolated_units,
    };
    Ok(Dataset {
        units,
        dates,
        panel,
        geo,
        mobility,
        report,
    })
}

/// Writes a panel in the cases schema (long format, unit-major).
pub fn write_cases<W: std::io::Write>(
    out: W,
    units: &[String],
    dates: &[NaiveDate],
    panel: &ObservationPanel,
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "unit", "cases"])?;
    for (u, name) in units.iter().enumerate() {
        for (n, d) in dates.iter().enumerate() {
            let v = panel.get(u, n).map_or_else(|| "NA".to_string(), |x| format!("{x}"));
            w.write_record([d.to_string(), name.clone(), v])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    const GEO: &str = "unit,lat,lon,population\nA,30.0,114.0,100000\nB,31.0,115.0,50000\n";

    #[test]
    fn missing_dates_become_missing_cells() {
        let dir = tempfile::tempdir().unwrap();
        let geo = file(dir.path(), "geo.csv", GEO);
        let cases = file(
            dir.path(),
            "cases.csv",
            "date,unit,cases\n2020-01-10,A,1\n2020-01-12,A,3\n2020-01-10,B,NA\n",
        );
        let (units, _) = read_geo(&geo).unwrap();
        let (dates, m) = read_cases(&cases, &units).unwrap();
        assert_eq!(dates.len(), 3);
        assert_eq!(m[0], vec![Some(1.0), None, Some(3.0)]);
        assert_eq!(m[1], vec![None, None, None]);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let geo = file(dir.path(), "geo.csv", GEO);
        let (units, _) = read_geo(&geo).unwrap();
        let dup = file(dir.path(), "d.csv", "date,unit,cases\n2020-01-10,A,1\n2020-01-10,A,2\n");
        assert!(read_cases(&dup, &units).unwrap_err().to_string().contains("duplicated"));
        let neg = file(dir.path(), "n.csv", "date,unit,cases\n2020-01-10,A,-1\n");
        assert!(read_cases(&neg, &units).unwrap_err().to_string().contains("negative"));
        let unk = file(dir.path(), "u.csv", "date,unit,cases\n2020-01-10,Z,1\n2020-01-10,Y,1\n");
        let msg = read_cases(&unk, &units).unwrap_err().to_string();
        assert!(msg.contains("Y, Z"), "{msg}");
        let geo_dup = file(dir.path(), "g2.csv", "unit,lat,lon,population\nA,1,1,10\nA,2,2,10\n");
        assert!(read_geo(&geo_dup).is_err());
        let mob = file(dir.path(), "m.csv", "day,from,to,flow\n0,A,Q,5\n");
        assert!(read_mobility(&mob, &units, 3).is_err());
    }

    #[test]
    fn mobility_interpolates_between_days() {
        let dir = tempfile::tempdir().unwrap();
        let geo = file(dir.path(), "geo.csv", GEO);
        let (units, _) = read_geo(&geo).unwrap();
        let mob = file(dir.path(), "m.csv", "day,from,to,flow\n0,A,B,10\n4,A,B,30\n");
        let (t, n) = read_mobility(&mob, &units, 6).unwrap();
        assert_eq!(n, 2);
        assert_eq!(t.flow(2, 0, 1), 20.0);
        assert_eq!(t.flow(5, 0, 1), 30.0);
        assert_eq!(t.flow(2, 1, 0), 0.0);
    }
}
