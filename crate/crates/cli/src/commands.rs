//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::NaiveDate;
use serde::Serialize;
use spatpomp::anomaly::anomalies;
use spatpomp::benchmarks::{conditional_logliks, fit_ar_with, fit_iid, ArOptions, BenchmarkFit};
use spatpomp::filters::{block_particle_filter, compare_filters, enkf, particle_filter, FilterConfig, FilterKind, FilterSpec};
use spatpomp::ibpf::{replicated_search, IbpfConfig, PerturbationSchedule};
use spatpomp::mobility::{gravity_adjust, GeoTable, GravityConfig, MobilityTensor};
use spatpomp::pomp::{percentile_summary, simulate, single_block, unit_blocks, ParameterSet, TimeGrid, DEFAULT_DT};
use spatpomp::profile::{boundary_lrt, jittered_starts, mcap, profile_grid, ProfileConfig, ProfilePoint, DEFAULT_SPAN};
use spatpomp::rng::derive_seed;
use spatpomp::seair::{SeairModel, SeairParams, COMPARTMENTS};
use spatpomp::stats::{mean, std_error};
use spatpomp::synthetic::synthetic_seair;
use spatpomp::Execution;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, read_geo, read_mobility, read_population, write_cases, Dataset, Sources};
use crate::output::{num, write_atomic, write_manifest, OutputDir};
use crate::{
    AnomalyArgs, BenchmarkArgs, Cli, Command, CommonArgs, CompareArgs, FilterArgs, FitArgs, McapArgs, PercentileArgs,
    ProfileArgs, SimulateArgs,
};

const IVP_NAMES: [&str; 2] = ["E0", "A0"];

struct Ctx {
    cfg: RunConfig,
    exec: Execution,
    threads: Option<usize>,
    seed: Option<u64>,
}

impl Ctx {
    fn new(common: &CommonArgs) -> CliResult<Self> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for (key, path) in [
            ("cases", &common.cases),
            ("geo", &common.geo),
            ("mobility", &common.mobility),
            ("population", &common.population),
            ("out", &common.out),
        ] {
            cfg.set_opt(key, path.as_ref().map(|p| p.display().to_string()));
        }
        cfg.set_opt("seed", common.seed);
        cfg.set_opt("source", common.source.clone());
        for (k, v) in &common.set {
            if !crate::config::PARAM_KEYS.contains(&k.as_str()) && k != "lockdown_time" && k != "gravity_factor" {
                return Err(CliError::user(format!("--set: unknown model parameter `{k}`")));
            }
            cfg.set(k, v);
        }
        let exec = if common.sequential { Execution::Sequential } else { Execution::Parallel };
        Ok(Self {
            cfg,
            exec,
            threads: common.threads,
            seed: None,
        })
    }

    /// The run seed; generated and printed when not given.
    fn seed(&mut self) -> CliResult<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        let s = match self.cfg.get::<u64>("seed")? {
            Some(s) => s,
            None => {
                let s = std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_nanos() as u64)
                    .unwrap_or(1);
                eprintln!("seed: {s}");
                s
            }
        };
        self.cfg.set("seed", s);
        self.seed = Some(s);
        Ok(s)
    }

    fn out(&self) -> CliResult<OutputDir> {
        OutputDir::create(&self.cfg.path("out").unwrap_or_else(|| PathBuf::from("spatpomp-out")))
    }

    fn dataset(&self) -> CliResult<Dataset> {
        let geo = self.cfg.require_path("geo")?;
        let cases = self.cfg.require_path("cases")?;
        let mobility = self.cfg.path("mobility");
        let population = self.cfg.path("population");
        ingest(&Sources {
            geo: &geo,
            cases: &cases,
            mobility: mobility.as_deref(),
            population: population.as_deref(),
        })
    }

    fn parameters(&self) -> CliResult<ParameterSet> {
        let mut set = SeairParams::fitted_constrained().to_set();
        for (k, v) in self.cfg.param_overrides()? {
            set.set(&k, v)?;
        }
        if let Some(t) = self.cfg.get::<f64>("lockdown_time")? {
            set.regime_boundary = t;
        }
        SeairParams::from_set(&set)?;
        Ok(set)
    }

    fn model(&self, units: &[String], geo: &GeoTable, mobility: &MobilityTensor) -> CliResult<SeairModel> {
        let factor = self.cfg.get_or("gravity_factor", 0.0)?;
        let mobility = if factor > 0.0 {
            gravity_adjust(mobility, geo, &GravityConfig { factor })?
        } else {
            mobility.clone()
        };
        let source = match self.cfg.raw("source") {
            Some(name) => units
                .iter()
                .position(|u| u == name)
                .ok_or_else(|| CliError::user(format!("source unit `{name}` is not in the geo table")))?,
            None => 0,
        };
        Ok(SeairModel::new(geo.population.clone(), Arc::new(mobility), source)?)
    }

    fn blocks(&self, key: &str, units: &[String], default: &str) -> CliResult<Vec<Vec<usize>>> {
        let spec = self.cfg.raw(key).unwrap_or(default);
        parse_blocks(spec, units)
    }
}

fn parse_blocks(spec: &str, units: &[String]) -> CliResult<Vec<Vec<usize>>> {
    match spec {
        "unit" => Ok(unit_blocks(units.len())),
        "single" => Ok(single_block(units.len())),
        groups => groups
            .split(';')
            .map(|g| {
                g.split(',')
                    .map(|name| {
                        let name = name.trim();
                        units
                            .iter()
                            .position(|u| u == name)
                            .ok_or_else(|| CliError::user(format!("blocks: unknown unit `{name}`")))
                    })
                    .collect()
            })
            .collect(),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| CliError::user(format!("`{key}`: cannot parse `{x}`")))
        })
        .collect()
}

/// Units, dates and geography for commands that only need the network.
struct Network {
    units: Vec<String>,
    dates: Vec<NaiveDate>,
    geo: GeoTable,
    mobility: MobilityTensor,
}

fn network(ctx: &Ctx) -> CliResult<Network> {
    if ctx.cfg.raw("cases").is_some() {
        let ds = ctx.dataset()?;
        return Ok(Network {
            units: ds.units,
            dates: ds.dates,
            geo: ds.geo,
            mobility: ds.mobility,
        });
    }
    let geo_path = ctx.cfg.require_path("geo")?;
    let (units, mut geo) = read_geo(&geo_path)?;
    if let Some(p) = ctx.cfg.path("population") {
        geo.population = read_population(&p, &units)?;
    }
    let days: usize = ctx
        .cfg
        .get("days")?
        .ok_or_else(|| CliError::user("without a cases file, --days is required"))?;
    if days == 0 {
        return Err(CliError::user("--days must be positive"));
    }
    let start = ctx.cfg.raw("start_date").unwrap_or("2020-01-10");
    let start = NaiveDate::parse_from_str(start, "%Y-%m-%d")
        .map_err(|e| CliError::user(format!("start_date `{start}`: {e}")))?;
    let mobility = match ctx.cfg.path("mobility") {
        Some(p) => read_mobility(&p, &units, days)?.0,
        None => MobilityTensor::empty(units.len(), days),
    };
    Ok(Network {
        units,
        dates: start.iter_days().take(days).collect(),
        geo,
        mobility,
    })
}

/// Runs the parsed command, writing outputs and the manifest.
pub fn run(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    let mut ctx = Ctx::new(&cli.common)?;
    let threads = ctx.threads;
    let name = command_name(&cli.command);
    let body = |ctx: &mut Ctx| -> CliResult<OutputDir> {
        match &cli.command {
            Command::Simulate(a) => cmd_simulate(ctx, a),
            Command::Filter(a) => cmd_filter(ctx, a),
            Command::Fit(a) => cmd_fit(ctx, a),
            Command::Profile(a) => cmd_profile(ctx, a),
            Command::Mcap(a) => cmd_mcap(ctx, a),
            Command::Benchmark(a) => cmd_benchmark(ctx, a),
            Command::Anomaly(a) => cmd_anomaly(ctx, a),
            Command::CompareFilters(a) => cmd_compare(ctx, a),
            Command::Percentiles(a) => cmd_percentiles(ctx, a),
        }
    };
    let out = with_threads(threads, || body(&mut ctx))??;
    let mut conf = String::new();
    for (k, v) in ctx.cfg.entries() {
        conf.push_str(&format!("{k} = {v}\n"));
    }
    write_atomic(&out.path().join("run.conf"), conf.as_bytes())?;
    write_manifest(&out, name, &ctx.cfg, ctx.seed, Some(worker_threads(threads, ctx.exec)), started)
}

fn worker_threads(requested: Option<usize>, exec: Execution) -> usize {
    if !exec.is_parallel() {
        return 1;
    }
    #[cfg(feature = "parallel")]
    return requested.unwrap_or_else(rayon::current_num_threads);
    #[cfg(not(feature = "parallel"))]
    {
        let _ = requested;
        1
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Filter(_) => "filter",
        Command::Fit(_) => "fit",
        Command::Profile(_) => "profile",
        Command::Mcap(_) => "mcap",
        Command::Benchmark(_) => "benchmark",
        Command::Anomaly(_) => "anomaly",
        Command::CompareFilters(_) => "compare-filters",
        Command::Percentiles(_) => "percentiles",
    }
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        Some(0) => Err(CliError::user("--threads must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    if threads == Some(0) {
        return Err(CliError::user("--threads must be at least 1"));
    }
    Ok(f())
}

fn cmd_simulate(ctx: &mut Ctx, a: &SimulateArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("reps", a.reps);
    ctx.cfg.set_opt("days", a.days);
    ctx.cfg.set_opt("start_date", a.start_date.clone());
    let seed = ctx.seed()?;
    let reps = ctx.cfg.get_or("reps", 1usize)?;
    let net = network(ctx)?;
    let model = ctx.model(&net.units, &net.geo, &net.mobility)?;
    let params = SeairParams::from_set(&ctx.parameters()?)?;
    let grid = TimeGrid::daily(0.0, net.dates.len(), DEFAULT_DT)?;
    let sims = simulate(&model, &params, &grid, reps, seed, ctx.exec)?;

    let mut out = ctx.out()?;
    for (r, sim) in sims.iter().enumerate() {
        let mut buf = Vec::new();
        write_cases(&mut buf, &net.units, &net.dates, &sim.observations)?;
        out.write_bytes(&format!("sim_cases_rep{r}.csv"), &buf)?;
    }
    let mut header = vec!["rep", "date", "unit"];
    header.extend(COMPARTMENTS);
    let rows = sims.iter().enumerate().flat_map(|(r, sim)| {
        let net = &net;
        sim.states.iter().enumerate().flat_map(move |(n, x)| {
            (0..net.units.len()).map(move |u| {
                let mut row = vec![r.to_string(), net.dates[n].to_string(), net.units[u].clone()];
                row.extend(x.unit(u).iter().map(|v| num(*v)));
                row
            })
        })
    });
    out.write_csv("sim_states.csv", &header, rows)?;
    Ok(out)
}

fn cmd_percentiles(ctx: &mut Ctx, a: &PercentileArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("reps", a.reps);
    ctx.cfg.set_opt("probs", a.probs.clone());
    ctx.cfg.set_opt("days", a.days);
    ctx.cfg.set_opt("start_date", a.start_date.clone());
    let seed = ctx.seed()?;
    let reps = ctx.cfg.get_or("reps", 100usize)?;
    let probs: Vec<f64> = parse_list("probs", ctx.cfg.raw("probs").unwrap_or("0.1,0.5,0.9"))?;
    let net = network(ctx)?;
    let model = ctx.model(&net.units, &net.geo, &net.mobility)?;
    let params = SeairParams::from_set(&ctx.parameters()?)?;
    let grid = TimeGrid::daily(0.0, net.dates.len(), DEFAULT_DT)?;
    let sims = simulate(&model, &params, &grid, reps, seed, ctx.exec)?;
    let panels: Vec<_> = sims.iter().map(|s| &s.observations).collect();
    let summary = percentile_summary(&panels, &probs)?;

    let mut out = ctx.out()?;
    let mut rows = Vec::new();
    for (u, unit) in net.units.iter().enumerate() {
        for (n, d) in net.dates.iter().enumerate() {
            for (k, p) in probs.iter().enumerate() {
                rows.push(vec![unit.clone(), d.to_string(), num(*p), num(summary.values[u][n][k])]);
            }
        }
    }
    out.write_csv("percentiles.csv", &["unit", "date", "prob", "value"], rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct FilterSummary {
    method: String,
    particles: usize,
    blocks: usize,
    reps: usize,
    seed: u64,
    logliks: Vec<f64>,
    mean_loglik: f64,
    se: f64,
    failures: Vec<Option<spatpomp::filters::FailurePoint>>,
}

fn cmd_filter(ctx: &mut Ctx, a: &FilterArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("method", a.method.clone());
    ctx.cfg.set_opt("J", a.particles);
    ctx.cfg.set_opt("blocks", a.blocks.clone());
    ctx.cfg.set_opt("reps", a.reps);
    let seed = ctx.seed()?;
    let method = ctx.cfg.raw("method").unwrap_or("bpf").to_string();
    let j: usize = ctx.cfg.get_or("J", 1000)?;
    let reps: usize = ctx.cfg.get_or("reps", 1)?;
    if reps == 0 {
        return Err(CliError::user("--reps must be positive"));
    }
    let ds = ctx.dataset()?;
    let model = ctx.model(&ds.units, &ds.geo, &ds.mobility)?;
    let params = SeairParams::from_set(&ctx.parameters()?)?;
    let blocks = match method.as_str() {
        "bpf" => ctx.blocks("blocks", &ds.units, "unit")?,
        "pf" | "enkf" => single_block(ds.units.len()),
        other => return Err(CliError::user(format!("unknown filter method `{other}` (pf, bpf, enkf)"))),
    };

    let mut results = Vec::with_capacity(reps);
    for r in 0..reps {
        let fc = FilterConfig::new(j, derive_seed(seed, &[r as u64])).with_exec(ctx.exec);
        let res = match method.as_str() {
            "pf" => particle_filter(&model, &params, &ds.panel, &fc)?,
            "bpf" => block_particle_filter(&model, &params, &ds.panel, &blocks, &fc)?,
            _ => enkf(&model, &params, &ds.panel, &fc)?,
        };
        results.push(res);
    }
    let logliks: Vec<f64> = results.iter().map(|r| r.loglik_total).collect();
    let summary = FilterSummary {
        method: method.clone(),
        particles: j,
        blocks: results[0].n_blocks(),
        reps,
        seed,
        mean_loglik: mean(&logliks),
        se: std_error(&logliks),
        failures: results.iter().map(|r| r.failure).collect(),
        logliks,
    };
    let mut out = ctx.out()?;
    out.write_json("ingest_report.json", &ds.report)?;
    out.write_json("filter.json", &summary)?;
    let mut rows = Vec::new();
    for (r, res) in results.iter().enumerate() {
        for (b, (cl, ess)) in res.cond_loglik.iter().zip(&res.ess).enumerate() {
            for (n, d) in ds.dates.iter().enumerate() {
                rows.push(vec![r.to_string(), b.to_string(), d.to_string(), num(cl[n]), num(ess[n])]);
            }
        }
    }
    out.write_csv("filter_cond.csv", &["rep", "block", "date", "cond_loglik", "ess"], rows)?;
    Ok(out)
}

fn ibpf_settings(ctx: &mut Ctx, a: &FitArgs) -> CliResult<()> {
    ctx.cfg.set_opt("J", a.particles);
    ctx.cfg.set_opt("iterations", a.iterations);
    ctx.cfg.set_opt("starts", a.starts);
    ctx.cfg.set_opt("eval_reps", a.eval_reps);
    ctx.cfg.set_opt("eval_J", a.eval_particles);
    ctx.cfg.set_opt("cooling", a.cooling);
    ctx.cfg.set_opt("rw_sd", a.rw_sd.clone());
    ctx.cfg.set_opt("blocks", a.blocks.clone());
    Ok(())
}

fn schedule(ctx: &Ctx, base: &ParameterSet) -> CliResult<PerturbationSchedule> {
    let iterations = ctx.cfg.get_or("iterations", 20usize)?;
    let mut s = PerturbationSchedule::defaults(base, &IVP_NAMES, iterations);
    if let Some(c) = ctx.cfg.get::<f64>("cooling")? {
        s.cooling_factor = c;
    }
    if let Some(spec) = ctx.cfg.raw("rw_sd") {
        for item in spec.split(',').filter(|x| !x.trim().is_empty()) {
            let (k, v) = crate::config::parse_assignment(item).map_err(CliError::user)?;
            let sd: f64 = v
                .parse()
                .map_err(|_| CliError::user(format!("rw_sd: `{v}` is not a number")))?;
            base.param(&k)?;
            match s.rw_sd.iter_mut().find(|(n, _)| *n == k) {
                Some(entry) => entry.1 = sd,
                None => s.rw_sd.push((k, sd)),
            }
        }
    }
    Ok(s)
}

fn ibpf_config(ctx: &Ctx, base: &ParameterSet, units: &[String], seed: u64) -> CliResult<IbpfConfig> {
    Ok(IbpfConfig {
        particles: ctx.cfg.get_or("J", 500)?,
        blocks: ctx.blocks("blocks", units, "unit")?,
        schedule: schedule(ctx, base)?,
        seed,
        exec: ctx.exec,
    })
}

fn params_map(set: &ParameterSet) -> serde_json::Map<String, serde_json::Value> {
    set.iter().map(|p| (p.name.clone(), serde_json::json!(p.value))).collect()
}

fn cmd_fit(ctx: &mut Ctx, a: &FitArgs) -> CliResult<OutputDir> {
    ibpf_settings(ctx, a)?;
    let seed = ctx.seed()?;
    let ds = ctx.dataset()?;
    let model = ctx.model(&ds.units, &ds.geo, &ds.mobility)?;
    let base = ctx.parameters()?;
    let cfg = ibpf_config(ctx, &base, &ds.units, seed)?;
    let n_starts = ctx.cfg.get_or("starts", 1usize)?;
    let eval_reps = ctx.cfg.get_or("eval_reps", 5usize)?;
    let eval_j = ctx.cfg.get_or("eval_J", cfg.particles)?;
    let starts = jittered_starts(&base, &cfg.schedule, 0.1, n_starts, derive_seed(seed, &[u64::MAX]))?;
    let rows = replicated_search(&model, &starts, &ds.panel, &cfg, eval_reps, eval_j)?;

    let mut out = ctx.out()?;
    out.write_json("ingest_report.json", &ds.report)?;
    let best = &rows[0];
    let search: Vec<serde_json::Value> = rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "start": r.start_index,
                "loglik": r.loglik,
                "se": r.se,
                "estimate": params_map(&r.estimate),
                "error": r.error,
            })
        })
        .collect();
    out.write_json(
        "fit.json",
        &serde_json::json!({
            "estimate": params_map(&best.estimate),
            "loglik": best.loglik,
            "se": best.se,
            "best_start": best.start_index,
            "iterations": cfg.schedule.iterations,
            "particles": cfg.particles,
            "seed": seed,
            "search": search,
        }),
    )?;
    let names = &best.trace.names;
    let mut header = vec!["start", "iteration"];
    header.extend(names.iter().map(String::as_str));
    header.push("loglik");
    let trace_rows = rows.iter().flat_map(|r| {
        r.trace.rows.iter().map(move |t| {
            let mut row = vec![r.start_index.to_string(), t.iteration.to_string()];
            row.extend(t.values.iter().map(|v| num(*v)));
            row.push(num(t.loglik));
            row
        })
    });
    out.write_csv("fit_trace.csv", &header, trace_rows)?;
    Ok(out)
}

fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].trim().parse().map_err(|_| CliError::user("grid: bad lower bound"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| CliError::user("grid: bad upper bound"))?;
        let n: usize = parts[2].trim().parse().map_err(|_| CliError::user("grid: bad point count"))?;
        if n < 2 || !(hi > lo) {
            return Err(CliError::user("grid: need lo < hi and at least 2 points"));
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    parse_list("grid", spec)
}

fn cmd_profile(ctx: &mut Ctx, a: &ProfileArgs) -> CliResult<OutputDir> {
    ibpf_settings(ctx, &a.fit)?;
    ctx.cfg.set_opt("param", a.param.clone());
    ctx.cfg.set_opt("grid", a.grid.clone());
    let seed = ctx.seed()?;
    let param = ctx
        .cfg
        .raw("param")
        .ok_or_else(|| CliError::user("missing --param"))?
        .to_string();
    let values = parse_grid(ctx.cfg.raw("grid").ok_or_else(|| CliError::user("missing --grid"))?)?;
    let ds = ctx.dataset()?;
    let model = ctx.model(&ds.units, &ds.geo, &ds.mobility)?;
    let base = ctx.parameters()?;
    let ibpf = ibpf_config(ctx, &base, &ds.units, seed)?;
    let pc = ProfileConfig {
        starts: ctx.cfg.get_or("starts", 1usize)?,
        jitter_sd: 0.1,
        eval_reps: ctx.cfg.get_or("eval_reps", 5usize)?,
        eval_particles: ctx.cfg.get_or("eval_J", ibpf.particles)?,
        ibpf,
    };
    let points = profile_grid(&model, &ds.panel, &param, &values, &base, &pc)?;

    let mut out = ctx.out()?;
    out.write_json("ingest_report.json", &ds.report)?;
    out.write_csv(
        "profile.csv",
        &["param", "value", "loglik", "se"],
        points
            .iter()
            .map(|p| vec![param.clone(), num(p.value), num(p.loglik), num(p.se)]),
    )?;
    let names: Vec<String> = base.names().map(str::to_string).collect();
    let mut header = vec!["value"];
    header.extend(names.iter().map(String::as_str));
    out.write_csv(
        "profile_params.csv",
        &header,
        points.iter().map(|p| {
            let mut row = vec![num(p.value)];
            row.extend(p.maximized_params.iter().map(|q| num(q.value)));
            row
        }),
    )?;
    Ok(out)
}

fn parse_num(s: &str) -> Option<f64> {
    match s {
        "NA" | "" => Some(f64::NAN),
        "Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        x => x.parse().ok(),
    }
}

fn read_profile(path: &Path) -> CliResult<Vec<ProfilePoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::user(format!("cannot open {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::user(format!("{}: missing column `{name}`", path.display())))
    };
    let (vi, li) = (col("value")?, col("loglik")?);
    let si = col("se").ok();
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let get = |k: usize| {
            parse_num(rec.get(k).unwrap_or(""))
                .ok_or_else(|| CliError::user(format!("{} row {}: bad number", path.display(), i + 2)))
        };
        points.push(ProfilePoint {
            value: get(vi)?,
            loglik: get(li)?,
            se: match si {
                Some(k) => get(k)?,
                None => 0.0,
            },
            maximized_params: ParameterSet::new(),
            error: None,
        });
    }
    Ok(points)
}

fn cmd_mcap(ctx: &mut Ctx, a: &McapArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("profile", a.profile.as_ref().map(|p| p.display().to_string()));
    ctx.cfg.set_opt("confidence", a.confidence);
    ctx.cfg.set_opt("span", a.span);
    let path = ctx.cfg.require_path("profile")?;
    let confidence = ctx.cfg.get_or("confidence", 0.95)?;
    let span = ctx.cfg.get_or("span", DEFAULT_SPAN)?;
    let points = read_profile(&path)?;
    let mut out = ctx.out()?;
    if a.boundary {
        let (lo, hi) = boundary_lrt(&points, confidence, span)?;
        out.write_json(
            "mcap.json",
            &serde_json::json!({ "method": "boundary_lrt", "confidence": confidence, "ci": [lo, hi] }),
        )?;
        return Ok(out);
    }
    let r = mcap(&points, confidence, span)?;
    out.write_json(
        "mcap.json",
        &serde_json::json!({
            "method": "mcap",
            "confidence": confidence,
            "span": span,
            "mle": r.mle,
            "cutoff": r.cutoff,
            "ci": [r.ci.0, r.ci.1],
            "mc_error_variance": r.mc_error_variance,
            "se_stat": r.se_stat,
            "quadratic_max": r.quadratic_max,
            "warnings": r.warnings,
        }),
    )?;
    out.write_csv(
        "mcap_smoothed.csv",
        &["value", "smoothed_loglik"],
        r.smoothed.iter().map(|(x, y)| vec![num(*x), num(*y)]),
    )?;
    Ok(out)
}

fn fit_benchmark(kind: &str, ds: &Dataset, exec: Execution) -> CliResult<BenchmarkFit> {
    match kind {
        "iid" => Ok(BenchmarkFit::Iid(fit_iid(&ds.panel)?)),
        "ar" => {
            let opts = ArOptions {
                exec,
                ..ArOptions::default()
            };
            Ok(BenchmarkFit::Ar(fit_ar_with(&ds.panel, &opts)?))
        }
        other => Err(CliError::user(format!("unknown benchmark model `{other}` (iid, ar)"))),
    }
}

fn cmd_benchmark(ctx: &mut Ctx, a: &BenchmarkArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("model", a.model.clone());
    let kind = ctx.cfg.raw("model").unwrap_or("ar").to_string();
    let ds = ctx.dataset()?;
    let fit = fit_benchmark(&kind, &ds, ctx.exec)?;
    let cond = conditional_logliks(&fit, &ds.panel)?;
    let mut out = ctx.out()?;
    out.write_json("ingest_report.json", &ds.report)?;
    out.write_json(
        "benchmark.json",
        &serde_json::json!({ "loglik": fit.loglik(), "df": fit.df(), "fit": fit }),
    )?;
    let mut rows = Vec::new();
    for (u, unit) in ds.units.iter().enumerate() {
        for (n, d) in ds.dates.iter().enumerate() {
            rows.push(vec![unit.clone(), d.to_string(), num(cond[u][n])]);
        }
    }
    out.write_csv("benchmark_cond.csv", &["unit", "date", "cond_loglik"], rows)?;
    Ok(out)
}

fn cmd_anomaly(ctx: &mut Ctx, a: &AnomalyArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("J", a.particles);
    ctx.cfg.set_opt("benchmark", a.benchmark.clone());
    ctx.cfg.set_opt("top", a.top);
    let seed = ctx.seed()?;
    let j: usize = ctx.cfg.get_or("J", 1000)?;
    let top: usize = ctx.cfg.get_or("top", 10)?;
    let bench_kind = ctx.cfg.raw("benchmark").unwrap_or("ar").to_string();
    let ds = ctx.dataset()?;
    let model = ctx.model(&ds.units, &ds.geo, &ds.mobility)?;
    let params = SeairParams::from_set(&ctx.parameters()?)?;
    let fc = FilterConfig::new(j, seed).with_exec(ctx.exec);
    let res = block_particle_filter(&model, &params, &ds.panel, &unit_blocks(ds.units.len()), &fc)?;
    let fit = fit_benchmark(&bench_kind, &ds, ctx.exec)?;
    let bench = conditional_logliks(&fit, &ds.panel)?;
    let m = anomalies(&res.cond_loglik, &bench, "seair_bpf", fit.label())?;
    let outliers = m.top_outliers(top)?;

    let mut out = ctx.out()?;
    out.write_json("ingest_report.json", &ds.report)?;
    let mut rows = Vec::new();
    let mut plot = Vec::new();
    for (u, unit) in ds.units.iter().enumerate() {
        for (n, d) in ds.dates.iter().enumerate() {
            rows.push(vec![
                unit.clone(),
                d.to_string(),
                num(res.cond_loglik[u][n]),
                num(bench[u][n]),
                num(m.values[u][n]),
            ]);
        }
    }
    for (n, d) in ds.dates.iter().enumerate() {
        for (u, unit) in ds.units.iter().enumerate() {
            plot.push(vec![d.to_string(), num(m.values[u][n]), unit.clone()]);
        }
    }
    out.write_csv("anomalies.csv", &["unit", "time", "model_cond", "bench_cond", "anomaly"], rows)?;
    out.write_csv("anomaly_plot.csv", &["time", "anomaly", "unit"], plot)?;
    out.write_csv(
        "top_outliers.csv",
        &["rank", "unit", "time", "anomaly"],
        outliers.iter().enumerate().map(|(k, o)| {
            vec![(k + 1).to_string(), ds.units[o.unit].clone(), ds.dates[o.time].to_string(), num(o.anomaly)]
        }),
    )?;
    let bench_total: f64 = bench.iter().flatten().sum();
    out.write_json(
        "anomaly.json",
        &serde_json::json!({
            "model_loglik": res.loglik_total,
            "benchmark_loglik": bench_total,
            "anomaly_total": m.total(),
            "benchmark": fit.label(),
            "particles": j,
            "seed": seed,
        }),
    )?;
    Ok(out)
}

fn cmd_compare(ctx: &mut Ctx, a: &CompareArgs) -> CliResult<OutputDir> {
    ctx.cfg.set_opt("units", a.units);
    ctx.cfg.set_opt("days", a.days);
    ctx.cfg.set_opt("J", a.particles.clone());
    ctx.cfg.set_opt("reps", a.reps);
    ctx.cfg.set_opt("filters", a.filters.clone());
    let seed = ctx.seed()?;
    let units: usize = ctx.cfg.get_or("units", 5)?;
    let days: usize = ctx.cfg.get_or("days", 20)?;
    let reps: usize = ctx.cfg.get_or("reps", 5)?;
    let js: Vec<usize> = parse_list("J", ctx.cfg.raw("J").unwrap_or("1000"))?;
    let filters: Vec<String> = parse_list("filters", ctx.cfg.raw("filters").unwrap_or("pf,bpf,enkf"))?;
    let syn = synthetic_seair(units, days, seed)?;
    let mut specs = Vec::new();
    for f in &filters {
        let kind = match f.as_str() {
            "pf" => FilterKind::Pf,
            "bpf" => FilterKind::Bpf(None),
            "enkf" => FilterKind::Enkf,
            other => return Err(CliError::user(format!("unknown filter `{other}`"))),
        };
        for &j in &js {
            specs.push(FilterSpec { kind: kind.clone(), particles: j });
        }
    }
    let rows = compare_filters(&syn.model, &syn.params, &syn.data, &specs, reps, derive_seed(seed, &[1]), ctx.exec)?;
    let mut out = ctx.out()?;
    out.write_csv(
        "compare_filters.csv",
        &["filter", "particles", "units", "reps", "mean_loglik", "se"],
        rows.iter().map(|r| {
            vec![
                r.filter.clone(),
                r.particles.to_string(),
                units.to_string(),
                r.logliks.len().to_string(),
                num(r.mean_loglik),
                num(r.se),
            ]
        }),
    )?;
    out.write_json("compare_filters.json", &rows)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_specs() {
        let units: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_blocks("unit", &units).unwrap(), vec![vec![0], vec![1], vec![2]]);
        assert_eq!(parse_blocks("single", &units).unwrap(), vec![vec![0, 1, 2]]);
        assert_eq!(parse_blocks("A,C;B", &units).unwrap(), vec![vec![0, 2], vec![1]]);
        assert!(parse_blocks("A;Q", &units).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:5").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("1,2.5").unwrap(), vec![1.0, 2.5]);
        assert!(parse_grid("1:0:5").is_err());
    }
}
