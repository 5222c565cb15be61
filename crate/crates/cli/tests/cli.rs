use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn run_config(body: &str, extra: &[&str]) -> (Output, TempDir) {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = tmp.path().join("out");
    let mut args = vec!["run", "--config", &cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = tclab(&args);
    (o, tmp)
}

fn report(tmp: &TempDir) -> Value {
    serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap()).unwrap()
}

#[test]
fn malformed_config_exits_2_without_output() {
    for body in [
        "{ not json",
        r#"{"experiment": "poisson-duality"}"#,
        r#"{"experiment": "no-such-thing", "seed": 1}"#,
        r#"{"experiment": "poisson-duality", "seed": 1, "colour": "red"}"#,
        r#"{"experiment": "poisson-duality", "seed": 1, "costs": {"lambda": 1.5}}"#,
        r#"{"experiment": "poisson-duality", "seed": 1, "market": {"kind": "brownian", "w": 1}}"#,
        r#"{"experiment": "poisson-duality", "seed": 1, "market": {"kind": "poisson", "alpha": 3}}"#,
        r#"{"experiment": "dpp-check", "seed": 1, "params": {"stops": [{"rule": "band-exit", "lo": 4, "hi": 5}]}}"#,
        r#"{"experiment": "value-function", "seed": 1, "solver": {"dl": 0.01, "dw": 0.5, "dt": 0.01, "w_max": 5, "tol": 1e-8, "max_iter": 10}}"#,
    ] {
        let (o, tmp) = run_config(body, &["--quick"]);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{body}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(!tmp.path().join("out").exists(), "{body}");
    }
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"experiment": "nupbr", "seed": 1}"#);
    assert_eq!(tclab(&["run", "--config", &cfg, "--quick"]).status.code(), Some(2));
    assert_eq!(
        tclab(&["run", "--config", "/nonexistent/c.json", "--out", "/tmp/x"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn zero_threads_is_rejected() {
    let (o, _tmp) = run_config(r#"{"experiment": "nupbr", "seed": 1}"#, &["--quick", "--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn quick_poisson_duality_passes_with_declared_assertions() {
    let (o, tmp) = run_config(r#"{"experiment": "poisson-duality", "seed": 42}"#, &["--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&tmp);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["experiment"], "poisson-duality");
    assert_eq!(r["threshold"], 5.0);
    assert_eq!(r["passed"], true);
    let declared: Vec<&str> = r["assertions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["id"].as_str().unwrap())
        .collect();
    let checked: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(declared, checked);
    assert!(r["results"]["duality"]["gap_z"].as_f64().unwrap().abs() < 5.0);
    for a in ["path.csv", "path.json"] {
        assert!(tmp.path().join("out").join(a).exists());
    }
    let text = std::fs::read_to_string(tmp.path().join("out/report.json")).unwrap();
    assert!(text.find("\"assertions\"").unwrap() < text.find("\"results\"").unwrap());
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let body = r#"{"experiment": "poisson-leverage-scan", "seed": 9, "samples": {"n": 4000}}"#;
    let (a, ta) = run_config(body, &["--threads", "1"]);
    let (b, tb) = run_config(body, &[]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for f in ["report.json", "scan.csv"] {
        let x = std::fs::read(ta.path().join("out").join(f)).unwrap();
        let y = std::fs::read(tb.path().join("out").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    let (_, tc) = run_config(body, &["--seed", "10"]);
    let r = report(&tc);
    assert_eq!(r["seed"], 10);
    assert_ne!(report(&ta)["results"], r["results"]);
}

#[test]
fn failed_assertion_exits_3_and_still_reports() {
    let body = r#"{"experiment": "stickiness", "seed": 3, "params": {"epsilon": 0.1, "threshold": 1e-9}}"#;
    let (o, tmp) = run_config(body, &["--quick"]);
    assert_eq!(o.status.code(), Some(3));
    let r = report(&tmp);
    assert_eq!(r["passed"], false);
    assert!(r["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn non_convergence_exits_4_without_output() {
    let body = r#"{"experiment": "value-function", "seed": 1,
        "solver": {"dl": 0.05, "dw": 0.2, "dt": 0.04, "w_max": 5, "tol": 1e-12, "max_iter": 20}}"#;
    let (o, tmp) = run_config(body, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn value_function_artifacts_read_back() {
    let body = r#"{"experiment": "value-function", "seed": 1,
        "solver": {"dl": 0.02, "dw": 0.1, "dt": 0.01, "w_max": 8, "tol": 1e-8, "max_iter": 100000}}"#;
    let (o, tmp) = run_config(body, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let out = tmp.path().join("out");
    let meta: tclab_core::io::GridMeta =
        serde_json::from_str(&std::fs::read_to_string(out.join("value_grid.json")).unwrap()).unwrap();
    let grid =
        tclab_core::io::read_value_grid_csv(std::fs::File::open(out.join("value_grid.csv")).unwrap(), &meta).unwrap();
    assert_eq!(grid.n_l(), 101);
    assert_eq!(grid.n_w(), 81);
    let costs = tclab_core::CostSpec::new(0.5).unwrap();
    let policy = tclab_core::io::read_policy_csv(std::fs::File::open(out.join("policy.csv")).unwrap(), &costs).unwrap();
    assert_eq!(policy.ell_nodes()[0], 0.0);
    assert_eq!(policy.max_value(), 2.0);
    let r = report(&tmp);
    assert_eq!(r["checks"].as_array().unwrap().len(), 10);
}

#[test]
fn every_shipped_config_parses_and_validates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let c = tclab_cli::ExperimentConfig::load(&path).unwrap();
        let ctx = tclab_cli::experiments::Ctx::new(&c, true).unwrap();
        tclab_cli::experiments::prepare(&c, &ctx).unwrap();
        assert_eq!(path.file_stem().unwrap().to_str().unwrap(), c.experiment.name());
        names.push(c.experiment.name());
    }
    assert_eq!(names.len(), 10);
}
