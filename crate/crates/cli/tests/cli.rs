use std::process::{Command, Output};

fn covert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covert")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn budget_reference_point() {
    let o = covert(&["budget", "--eta", "0.5", "--nbar-b", "1", "--n", "1000000", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let s = v["nbar_s"].as_f64().unwrap();
    assert!((s - 2.449490e-3).abs() < 1e-9, "{s}");
    assert_eq!(v["manifest"]["defaults_applied"][0], "delta");
}

#[test]
fn missing_noise_is_a_usage_error() {
    let o = covert(&["budget", "--eta", "0.5", "--n", "100"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--nbar-b"));
}

#[test]
fn zero_noise_reports_covertness_impossible() {
    let o = covert(&["budget", "--eta", "0.5", "--nbar-b", "0", "--n", "100"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("impossible") && err.lines().count() == 1, "{err}");
}

#[test]
fn capacity_has_no_nan() {
    let o = covert(&["capacity", "--eta", "0.9", "--nbar-b", "0.1", "--nbar-s", "0.01", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(!text.contains("NaN") && !text.contains("null"), "{text}");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["covariance"]["layout"], "qqpp");
    assert_eq!(v["covariance"]["rho"].as_array().unwrap().len(), 16);
}

#[test]
fn log_sweep_over_blocklength() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = covert(&[
        "sweep", "--axis", "n", "--range", "1e4:1e12:9", "--spacing", "log", "--quantities", "photon_budget,ea_capacity,m_bound_no_ea",
        "--eta", "0.5", "--nbar-b", "1", "--q0", "0.2", "--q1", "0.1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_path(&out).unwrap();
    let header = rd.headers().unwrap().clone();
    assert_eq!(&header[0], "n");
    assert_eq!(header.iter().last(), Some("error_flags"));
    let recs: Vec<_> = rd.records().map(|r| r.unwrap()).collect();
    // units row plus nine points
    assert_eq!(recs.len(), 10);
    assert_eq!(&recs[0][1], "photons/mode");
    assert_eq!(&recs[1][0], "10000");
    assert_eq!(&recs[9][0], "1000000000000");
    for r in &recs[1..] {
        assert!(r[4].is_empty());
        let s: f64 = r[1].parse().unwrap();
        assert!(s > 0.0);
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("sweep.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["calibration"]["q0"], 0.2);
}

#[test]
fn sweep_flags_bad_points_without_failing() {
    let o = covert(&["sweep", "--axis", "eta", "--values", "0.5,1.5", "--quantities", "covert_constant", "--nbar-b", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].contains(",,") && lines[3].contains("eta"), "{}", lines[3]);
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let o = covert(&["sweep", "--axis", "eta", "--range", "0.1:0.9:0", "--quantities", "ea_capacity", "--nbar-b", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fast_verification_passes() {
    let o = covert(&["verify", "--level", "fast"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("4 of 4 criteria passed"));
}

#[test]
fn config_supplies_values_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("covert.toml");
    std::fs::write(&cfg, "eta = 0.5\nnbar_b = 1.0\nn = 1000000\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = covert(&["--config", c, "budget", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["nbar_s"].as_f64().unwrap() - 2.449490e-3).abs() < 1e-9);
    let o = covert(&["budget", "--config", c, "--n", "4000000", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["nbar_s"].as_f64().unwrap() - 2.449490e-3 / 2.0).abs() < 1e-9);

    std::fs::write(&cfg, "etta = 0.5\n").unwrap();
    let o = covert(&["--config", c, "budget"]);
    assert_eq!(o.status.code(), Some(2));
}
