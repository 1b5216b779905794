use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn spatpomp(args: &[&str], out: &Path) -> Output {
    let f = fixtures();
    Command::new(env!("CARGO_BIN_EXE_spatpomp"))
        .args(args)
        .arg("--geo")
        .arg(f.join("geo.csv"))
        .arg("--mobility")
        .arg(f.join("mobility.csv"))
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn with_cases<'a>(args: &[&'a str], cases: &'a str) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(["--cases", cases]);
    v
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn cases_path() -> String {
    fixtures().join("cases.csv").display().to_string()
}

#[test]
fn benchmark_ar_nests_iid() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = cases_path();
    let (a, b) = (tmp.path().join("iid"), tmp.path().join("ar"));
    assert!(spatpomp(&with_cases(&["benchmark", "--model", "iid"], &cases), &a).status.success());
    assert!(spatpomp(&with_cases(&["benchmark", "--model", "ar"], &cases), &b).status.success());
    let iid = json(&a.join("benchmark.json"))["loglik"].as_f64().unwrap();
    let ar = json(&b.join("benchmark.json"))["loglik"].as_f64().unwrap();
    assert!(ar >= iid, "ar {ar} < iid {iid}");
    let report = json(&a.join("ingest_report.json"));
    assert_eq!(report["missing_cells"], 1);
    assert_eq!(report["units"], 3);
}

#[test]
fn same_seed_same_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = cases_path();
    let args = with_cases(&["filter", "--method", "bpf", "--J", "200", "--seed", "9"], &cases);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(spatpomp(&args, &a).status.success());
    assert!(spatpomp(&[args.as_slice(), &["--threads", "3"]].concat(), &b).status.success());
    for f in ["filter.json", "filter_cond.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let seq = tmp.path().join("seq");
    assert!(spatpomp(&[args.as_slice(), &["--sequential"]].concat(), &seq).status.success());
    assert_eq!(std::fs::read(a.join("filter.json")).unwrap(), std::fs::read(seq.join("filter.json")).unwrap());
}

#[test]
fn manifest_records_seed_and_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = spatpomp(&["simulate", "--days", "10", "--reps", "2", "--seed", "4"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["seed"], 4);
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(files.contains(&"sim_cases_rep1.csv"));
    let text = std::fs::read_to_string(out.join("sim_cases_rep0.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 10);
}

#[test]
fn simulated_cases_round_trip_through_ingest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    assert!(spatpomp(&["simulate", "--days", "12", "--seed", "1", "--set", "E0=200"], &out).status.success());
    let cases = out.join("sim_cases_rep0.csv").display().to_string();
    let b = tmp.path().join("bench");
    let o = spatpomp(&with_cases(&["benchmark", "--model", "iid"], &cases), &b);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&b.join("ingest_report.json"))["days"], 12);
}

#[test]
fn anomaly_outputs_sum_to_likelihood_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = cases_path();
    let out = tmp.path().join("an");
    let o = spatpomp(&with_cases(&["anomaly", "--J", "200", "--seed", "2", "--top", "4"], &cases), &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&out.join("anomaly.json"));
    let diff = s["model_loglik"].as_f64().unwrap() - s["benchmark_loglik"].as_f64().unwrap();
    assert!((s["anomaly_total"].as_f64().unwrap() - diff).abs() < 1e-8 * diff.abs().max(1.0));
    let top = std::fs::read_to_string(out.join("top_outliers.csv")).unwrap();
    assert_eq!(top.lines().count(), 5);
}

#[test]
fn mcap_on_profile_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixtures().join("profile.csv").display().to_string();
    let out = tmp.path().join("m");
    assert!(spatpomp(&["mcap", "--profile", &profile], &out).status.success());
    let r = json(&out.join("mcap.json"));
    let ci = r["ci"].as_array().unwrap();
    let (lo, hi) = (ci[0].as_f64().unwrap(), ci[1].as_f64().unwrap());
    let mle = r["mle"].as_f64().unwrap();
    assert!(lo < mle && mle < hi && (0.3..0.7).contains(&mle));
}

#[test]
fn user_errors_exit_one_with_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    for (args, needle) in [
        (vec!["filter", "--cases", "tests/fixtures/bad_unit_cases.csv"], "Nowhere"),
        (vec!["benchmark", "--cases", "tests/fixtures/negative_cases.csv"], "negative"),
        (vec!["filter", "--method", "kf", "--cases", "tests/fixtures/cases.csv"], "unknown filter"),
        (vec!["simulate", "--days", "5", "--set", "nonsense=1"], "nonsense"),
        (vec!["filter", "--nope"], "--nope"),
    ] {
        let abs: Vec<String> = args
            .iter()
            .map(|a| if a.starts_with("tests/") { Path::new(env!("CARGO_MANIFEST_DIR")).join(a).display().to_string() } else { a.to_string() })
            .collect();
        let abs: Vec<&str> = abs.iter().map(String::as_str).collect();
        let o = spatpomp(&abs, &tmp.path().join("x"));
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        let line = err.lines().last().unwrap();
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["error"], "user");
        assert!(v["message"].as_str().unwrap().contains(needle), "{line}");
    }
}

#[test]
fn compare_filters_reports_every_spec() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = spatpomp(
        &["compare-filters", "--units", "2", "--days", "8", "--J", "50,100", "--reps", "2", "--seed", "3"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("compare_filters.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}
