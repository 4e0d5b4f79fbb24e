use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use xover::io::design_to_json;
use xover::verify::{d0, oa18};

fn xover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xover"))
        .args(args)
        .env_remove("XOVER_CAP")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        std::fs::write(f.path("d0.json"), design_to_json(&d0(), Some(&labels))).unwrap();
        std::fs::write(f.path("oa18.json"), design_to_json(&oa18(), None)).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn evaluate_trace_scales_with_g() {
    let f = Fixture::new();
    let o = xover(&["evaluate", "--design", &f.arg("d0.json"), "--cov", "ar1:0.3", "--g", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    let block = r["block_trace"].as_f64().unwrap();
    assert!((r["trace"].as_f64().unwrap() - 5.0 * block).abs() < 1e-12);
    assert_eq!(r["config"]["cov"], "ar1:0.3");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["oa_certificate"]["passed"], false);
    assert_eq!(r["labels"], serde_json::json!(["A", "B", "C"]));
}

#[test]
fn evaluate_oa_is_completely_symmetric() {
    let f = Fixture::new();
    let out = f.arg("report.json");
    let csv = f.arg("block.csv");
    let o = xover(&[
        "evaluate", "--design", &f.arg("oa18.json"), "--cov", "identity", "--out", &out,
        "--matrix-out", &csv,
    ]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["classification"]["is_completely_symmetric"], true);
    assert_eq!(r["oa_certificate"]["passed"], true);
    assert_eq!(r["oa_certificate"]["lambda"], 3);
    let m = xover::io::read_matrix_csv(Path::new(&csv)).unwrap();
    assert!((m.trace() - r["block_trace"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn evaluate_rejects_indefinite_covariance() {
    let f = Fixture::new();
    let o = xover(&["evaluate", "--design", &f.arg("d0.json"), "--cov", "tridiag:0.9"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("NotPositiveDefinite"));
    let o = xover(&["evaluate", "--design", &f.arg("missing.json")]);
    assert_eq!(code(&o), 1);
    let o = xover(&["evaluate", "--design", &f.arg("d0.json"), "--cov", "ar1:2"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn construct_oa_reports_lambda() {
    let f = Fixture::new();
    let out = f.arg("oa.json");
    let o = xover(&["construct-oa", "--t", "3", "--method", "modular", "--out", &out]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "n = 6, lambda = 1");
    let d = xover::io::read_design(Path::new(&out)).unwrap();
    assert!(xover_core::verify_oa(&d.design).passed);

    let o = xover(&["construct-oa", "--t", "4", "--method", "all-perms", "--out", &f.arg("oa.csv")]);
    assert_eq!(stdout(&o).trim(), "n = 24, lambda = 2");
    let d = xover::io::read_design(&f.path("oa.csv")).unwrap();
    assert_eq!((d.design.t(), d.design.n()), (4, 24));

    let o = xover(&["construct-oa", "--t", "4", "--method", "modular"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("NotPrime"));
}

#[test]
fn construct_oa_without_out_prints_design() {
    let o = xover(&["construct-oa", "--t", "3"]);
    assert_eq!(code(&o), 0);
    let v = xover::io::parse_design(&stdout(&o), None).unwrap();
    assert_eq!(v.design.n(), 6);
}

#[test]
fn search_counts_and_cap() {
    let o = xover(&["search", "--t", "3", "--n", "2", "--cov", "identity"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["evaluated_count"], 36);
    assert!(r["argmax"].as_array().unwrap().iter().all(|d| d["t"] == 3));

    let o = xover(&["search", "--t", "4", "--n", "12", "--cov", "identity"]);
    assert_eq!(code(&o), 3);

    let o = Command::new(env!("CARGO_BIN_EXE_xover"))
        .args(["search", "--t", "3", "--n", "2"])
        .env("XOVER_CAP", "10")
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    let o = Command::new(env!("CARGO_BIN_EXE_xover"))
        .args(["search", "--t", "3", "--n", "2"])
        .env("XOVER_CAP", "lots")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn search_full_t3_n6() {
    let o = xover(&["search", "--t", "3", "--n", "6", "--cov", "ar1:0.3", "--workers", "3"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    assert_eq!(r["evaluated_count"], 46656);
    assert_eq!(r["oa_attains_max"], true);
    let again = json(&xover(&["search", "--t", "3", "--n", "6", "--cov", "ar1:0.3", "--workers", "1"]));
    assert_eq!(r["argmax"], again["argmax"]);
    assert_eq!(r["best_trace"], again["best_trace"]);
}

#[test]
fn curve_outputs() {
    let f = Fixture::new();
    let csv = f.arg("curve.csv");
    let args = |out: &str, extra: &[&str]| {
        let mut v = vec![
            "curve".to_string(), "--design".into(), f.arg("d0.json"), "--dstar".into(),
            f.arg("oa18.json"), "--out".into(), out.to_string(),
        ];
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let a = args(&csv, &["--family", "ar1", "--step", "0.01"]);
    let o = xover(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,trace_d,trace_dstar,efficiency"));
    assert_eq!(lines.count(), 199);
    assert!(stdout(&o).contains("e_max = "));
    assert!(stdout(&o).contains("argmax_r = 0"));

    // Repeated runs are bit-identical.
    let csv2 = f.arg("curve2.csv");
    let b = args(&csv2, &["--family", "ar1", "--step", "0.01"]);
    xover(&b.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&csv2).unwrap());

    let c = args(&csv, &["--family", "tridiag", "--r-min", "0", "--r-max", "0"]);
    assert_eq!(code(&xover(&c.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));

    let bad = args(&csv, &["--family", "ar1", "--r-min", "-1.5", "--r-max", "0"]);
    assert_eq!(code(&xover(&bad.iter().map(String::as_str).collect::<Vec<_>>())), 1);
    let bad = args(&csv, &["--family", "ar1", "--step", "0"]);
    assert_eq!(code(&xover(&bad.iter().map(String::as_str).collect::<Vec<_>>())), 1);
}

#[test]
fn verify_default_and_impossible_tolerance() {
    let o = xover(&["verify"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let r = json(&o);
    assert_eq!(r["passed"], true);
    assert_eq!(r["suites"].as_array().unwrap().len(), 7);

    let o = xover(&["verify", "--tol", "1e-30"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    let failed: Vec<&Value> = r["suites"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["passed"] == false)
        .collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|s| s["max_residual"].as_f64().unwrap() > 1e-30));
}

#[test]
fn verify_single_suite() {
    let o = xover(&["verify", "--suite", "decomposition", "--t", "3"]);
    assert_eq!(code(&o), 0);
    let r = json(&o);
    let s = &r["suites"][0];
    assert_eq!(s["suite"], "decomposition");
    assert!(s["max_residual"].as_f64().unwrap() < 1e-9);
    assert_eq!(code(&xover(&["verify", "--t", "9"])), 1);
}
