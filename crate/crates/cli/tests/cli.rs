use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
schema_version = 1
degrees = [4, 8, 16]

[grid]
x_min = -2.5
x_max = 2.5
y_min = -2.5
y_max = 2.5
nx = 81
ny = 81

[ensemble]
n_samples = 20
seed = 7

[qe]
l1_points = 41

[onb]
draws = 50

[orbit]
draws = 2000
"#;

fn qelab() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qelab"));
    c.env_remove("QELAB_OUT_ROOT");
    c
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    qelab().args(args).output().unwrap()
}

fn run_ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "qelab {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every numeric output in `dir`, keyed by file name.
fn numeric_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "jsonl")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let headers = rd.headers().unwrap().clone();
    rd.records()
        .map(|r| headers.iter().zip(r.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["orbit", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn missing_config_has_its_own_exit_code() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("absent.toml");
    assert_eq!(run(&["gram", "--config", s(&missing)]).status.code(), Some(3));
}

#[test]
fn schema_violations_exit_four() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 99\n").unwrap();
    assert_eq!(run(&["gram", "--config", s(&bad)]).status.code(), Some(4));
    std::fs::write(&bad, "schema_version = 1\nunknown_key = 3\n").unwrap();
    assert_eq!(run(&["gram", "--config", s(&bad)]).status.code(), Some(4));
    let cfg = small_config(tmp.path());
    let o = run(&["gram", "--config", s(&cfg), "--tol-override", "envelope.no_such=1"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn singular_gram_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("few_nodes.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\ndegrees = [8]\n[model]\nweight = { kind = \"zero\" }\n\
         measure = { kind = \"circle\", radius = 1.0, resolution = 4 }\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&["gram", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(5));
}

#[test]
fn flat_circle_envelope_is_log_of_radius_squared_on_a_ring() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&["envelope", "--config", s(&cfg), "--out", s(&out), "--tol-override", "degrees=[4]"]);
    let text = std::fs::read_to_string(out.join("envelope.csv")).unwrap();
    let mut lines = text.lines().skip(1);
    let dims: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (x_min, x_max, y_min, nx) = (dims[0], dims[1], dims[2], dims[4] as usize);
    let h = (x_max - x_min) / (nx - 1) as f64;
    let mut checked = 0;
    for (j, line) in lines.enumerate() {
        for (i, v) in line.split(',').enumerate() {
            let (x, y) = (x_min + i as f64 * h, y_min + j as f64 * h);
            let r = x.hypot(y);
            if (r - 2.0).abs() < 0.5 * h {
                let v: f64 = v.parse().unwrap();
                assert!((v - 2.0 * r.ln()).abs() < 5.0 * h, "envelope {v} at radius {r}");
                checked += 1;
            }
        }
    }
    assert!(checked > 20);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("envelope.json")).unwrap()).unwrap();
    assert!(summary["coincidence_radius"].as_f64().unwrap() > 0.9);
}

#[test]
fn orbit_of_a_scalar_spectrum_vanishes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    run_ok(&["orbit", "--out", s(&out), "--tol-override", "orbit.spectrum=[3.5]", "--tol-override", "orbit.draws=100"]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("orbit.json")).unwrap()).unwrap();
    assert_eq!(v["closed_form"].as_f64(), Some(0.0));
    assert!(v["mc_mean"].as_f64().unwrap().abs() < 1e-25);
}

#[test]
fn qe_then_report_summarizes_each_degree() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    run_ok(&["qe", "--config", s(&cfg), "--out", s(&out)]);
    run_ok(&["report", "--config", s(&cfg), "--out", s(&out)]);
    let rows = csv_rows(&out.join("summary.csv"));
    let defect: Vec<&BTreeMap<String, String>> =
        rows.iter().filter(|r| r["source"] == "qe" && r["metric"] == "mean_defect").collect();
    let degrees: Vec<&str> = defect.iter().map(|r| r["degree"].as_str()).collect();
    assert_eq!(degrees, ["4", "8", "16"]);
    assert!(defect.iter().all(|r| r["decreasing"] == "true"), "{defect:?}");
    let l1: Vec<f64> = rows
        .iter()
        .filter(|r| r["metric"] == "mean_l1")
        .map(|r| r["value"].parse().unwrap())
        .collect();
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
}

#[test]
fn report_without_inputs_is_an_output_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("empty");
    assert_eq!(run(&["report", "--out", s(&out)]).status.code(), Some(6));
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&["zeros", "--config", s(&cfg), "--out", s(dir)]);
        run_ok(&["sample", "--config", s(&cfg), "--out", s(dir)]);
    }
    let (fa, fb) = (numeric_outputs(&a), numeric_outputs(&b));
    assert!(fa.len() >= 8);
    assert_eq!(fa, fb);
    let c = tmp.path().join("c");
    run_ok(&["sample", "--config", s(&cfg), "--out", s(&c), "--seed", "8"]);
    assert_ne!(fa["samples_N4.csv"], numeric_outputs(&c)["samples_N4.csv"]);
}

#[test]
fn worker_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (one, four) = (tmp.path().join("one"), tmp.path().join("four"));
    for (dir, w) in [(&one, "1"), (&four, "4")] {
        run_ok(&["qe", "--config", s(&cfg), "--out", s(dir), "--workers", w]);
        run_ok(&["onb", "--config", s(&cfg), "--out", s(dir), "--workers", w]);
    }
    assert_eq!(numeric_outputs(&one), numeric_outputs(&four));
}

#[test]
fn sidecar_records_config_seed_and_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("out");
    let o = run_ok(&["szego", "--config", s(&cfg), "--out", s(&out), "--seed", "11"]);
    let listed = String::from_utf8(o.stdout).unwrap();
    assert!(listed.lines().any(|l| l == "szego.csv"));
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("szego.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["subcommand"], "szego");
    assert_eq!(meta["seed_provenance"]["master_seed"], 11);
    assert_eq!(meta["resolved_config"]["model"]["limit"], "support");
    assert!(meta["outputs"].as_array().unwrap().iter().any(|v| v == "szego.csv"));
    let resolved = std::fs::read_to_string(out.join("szego.config.toml")).unwrap();
    let reparsed: toml::Table = toml::from_str(&resolved).unwrap();
    assert_eq!(reparsed["ensemble"]["seed"].as_integer(), Some(11));
    assert!(reparsed["model"].get("builtin").is_none());
    let rerun = tmp.path().join("rerun");
    let resolved_path = out.join("szego.config.toml");
    run_ok(&["szego", "--config", s(&resolved_path), "--out", s(&rerun)]);
    assert_eq!(
        std::fs::read(out.join("szego.csv")).unwrap(),
        std::fs::read(rerun.join("szego.csv")).unwrap()
    );
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().join("from_env");
    let o = qelab()
        .args(["orbit", "--tol-override", "orbit.draws=50"])
        .env("QELAB_OUT_ROOT", &root)
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(root.join("orbit.json").exists());
    assert!(!tmp.path().join("qelab-out").exists());
    let explicit = tmp.path().join("explicit");
    let o = qelab()
        .args(["orbit", "--tol-override", "orbit.draws=50", "--out", s(&explicit)])
        .env("QELAB_OUT_ROOT", &root)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(explicit.join("orbit.json").exists());
}
