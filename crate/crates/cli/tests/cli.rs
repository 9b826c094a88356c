use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn speclab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_speclab"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("SPECLAB_SEED")
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn free_density_rows_match_sine_over_pi() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "density",
            "--potential",
            "zero",
            "--L",
            "10",
            "--Emin",
            "-1",
            "--Emax",
            "1",
            "--grid",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let mut rows = csv::Reader::from_path(dir.path().join("density.csv")).unwrap();
    assert_eq!(rows.headers().unwrap(), vec!["E", "k", "density"]);
    let mut n = 0;
    for r in rows.records() {
        let r = r.unwrap();
        let k: f64 = r[1].parse().unwrap();
        let rho: f64 = r[2].parse().unwrap();
        assert!((rho - (PI * k).sin() / PI).abs() < 1e-12);
        n += 1;
    }
    assert_eq!(n, 3);
    let m = manifest(dir.path());
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config"]["L"], 10);
}

#[test]
fn verify_free_passes_and_lists_each_audit_once() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(dir.path(), &["verify", "--suite", "free"]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(dir.path());
    let audits = m["audits"].as_array().unwrap();
    assert!(audits.len() >= 8);
    let mut names: Vec<&str> = audits.iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert!(audits.iter().all(|a| a["status"] == "pass"));
    names.sort();
    names.dedup();
    assert_eq!(names.len(), audits.len());
}

#[test]
fn verify_all_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(dir.path(), &["verify", "--suite", "all"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(manifest(dir.path())["audits"].as_array().unwrap().len() > 30);
}

#[test]
fn embedded_reports_a_negative_resonant_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &["embedded", "--c", "8", "--k0", "0.25", "--phi", "0", "--L", "100000"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert!(r["resonant_slope"].as_f64().unwrap() < 0.0);
    assert!(r["off_resonant_slope"].as_f64().unwrap() < 0.05);
    assert_eq!(r["sweep"].as_array().unwrap().len(), 8);
}

#[test]
fn oracle_compare_emits_the_documented_fields() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "oracle-compare",
            "--potential",
            "power_decay",
            "--B",
            "1",
            "--L",
            "100",
            "--size",
            "1000",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    for key in ["interval", "quadrature_mass", "oracle_mass", "abs_diff"] {
        assert!(!r[key].is_null(), "{key}");
    }
    assert!(r["abs_diff"].as_f64().unwrap() < 1e-3);
}

#[test]
fn short_oracle_is_flagged_marginal_not_failed() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "oracle-compare",
            "--potential",
            "power_decay",
            "--L",
            "100",
            "--size",
            "10",
            "--Emin",
            "-0.3",
            "--Emax",
            "0.2",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(manifest(dir.path())["audits"][0]["status"], "marginal");
}

#[test]
fn invalid_configuration_exits_2_with_error_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(dir.path(), &["density", "--potential", "power_decay", "--B", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(dir.path());
    assert!(m["error"].as_str().unwrap().contains("B"));

    let out = speclab(dir.path(), &["density", "--Emin", "2.5", "--Emax", "3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = speclab(dir.path(), &["verify", "--suite", "everything"]);
    assert_eq!(out.status.code(), Some(2));
    let out = speclab(dir.path(), &["density", "--potential", "triangle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_echo_reproduces_the_csv_bytes() {
    let first = tempfile::tempdir().unwrap();
    let args = [
        "density",
        "--potential",
        "seeded_random_decay",
        "--B",
        "1.5",
        "--seed",
        "42",
        "--L",
        "300",
        "--grid",
        "17",
    ];
    assert_eq!(speclab(first.path(), &args).status.code(), Some(0));
    let second = tempfile::tempdir().unwrap();
    let echo = first.path().join("config.toml");
    let out = speclab(second.path(), &["density", "--config", echo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let a = fs::read(first.path().join("density.csv")).unwrap();
    let b = fs::read(second.path().join("density.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn flags_override_file_and_environment_overrides_file_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "potential = \"seeded_random_decay\"\nB = 1\nseed = 1\nL = 50\ngrid = 5\n",
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_speclab"))
        .args(["density", "--config", cfg.to_str().unwrap(), "--L", "60", "--out"])
        .arg(dir.path())
        .env("SPECLAB_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(dir.path());
    assert_eq!(m["config"]["L"], 60);
    assert_eq!(m["config"]["seed"], 7);
    assert_eq!(m["config"]["B"], 1.0);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "Lmax = 5\n").unwrap();
    let out = speclab(dir.path(), &["density", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trace_writes_strided_rows_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "trace",
            "--potential",
            "power_decay",
            "--k",
            "0.2",
            "--L",
            "1000",
            "--stride",
            "100",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = csv::Reader::from_path(dir.path().join("trace.csv"))
        .unwrap()
        .records()
        .count();
    assert_eq!(rows, 11);
    let m = manifest(dir.path());
    let names: Vec<&str> = m["audits"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"representation_equivalence") && names.contains(&"transfer_determinant"));
}

#[test]
fn sums_and_dimension_controls() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "sums",
            "--potential",
            "power_decay",
            "--B",
            "2",
            "--k",
            "0.3",
            "--k2",
            "0.31",
            "--L",
            "100000",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert!(r["cos4"]["drift_slope"].as_f64().unwrap().abs() < 0.05);
    assert!((r["harmonic_slope"].as_f64().unwrap() - 1.0).abs() < 0.01);

    let out = speclab(
        dir.path(),
        &["dimension", "--potential", "zero", "--L", "10000", "--E", "0.3"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    assert!((r["slope"].as_f64().unwrap() - 1.0).abs() < 0.02);
    let header = fs::read_to_string(dir.path().join("dimension.csv")).unwrap();
    assert!(header.starts_with("eps,mass,log_eps,log_mass\n"));
}

#[test]
fn scan_reports_counts_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = speclab(
        dir.path(),
        &[
            "scan",
            "--potential",
            "power_decay",
            "--B",
            "1",
            "--scales",
            "1,2",
            "--jobs",
            "2",
        ],
    );
    // near-threshold grid points at the first scale make the run marginal
    assert_eq!(out.status.code(), Some(4));
    let r = stdout_json(&out);
    let scales = r["scales"].as_array().unwrap();
    assert_eq!(scales.len(), 2);
    for s in scales {
        assert!(s["count"].as_u64().unwrap() <= 10);
    }
    let m = manifest(dir.path());
    let sound = m["audits"]
        .as_array()
        .unwrap()
        .iter()
        .find(|a| a["name"] == "separation_soundness")
        .unwrap();
    assert_eq!(sound["status"], "pass");
}

#[test]
fn jobs_do_not_change_outputs() {
    let one = tempfile::tempdir().unwrap();
    let many = tempfile::tempdir().unwrap();
    let args = ["density", "--potential", "power_decay", "--L", "500", "--grid", "33"];
    speclab(one.path(), &args);
    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "4"]);
    speclab(many.path(), &with_jobs);
    assert_eq!(
        fs::read(one.path().join("density.csv")).unwrap(),
        fs::read(many.path().join("density.csv")).unwrap()
    );
}
