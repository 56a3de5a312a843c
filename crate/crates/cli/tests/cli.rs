use std::process::Command;

fn lodwave() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lodwave"))
}

#[test]
fn invalid_flags_exit_with_usage_error() {
    let out = lodwave().args(["run", "--coarse-level", "x"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = lodwave().arg("bogus").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_trajectory_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    let out = lodwave()
        .args(["run", "--example", "example2", "--coarse-level", "2", "--fine-level", "6", "--ell", "1", "--method", "lod", "--T", "0.5", "--every", "4", "--out"])
        .arg(dir.path())
        .env_remove("LODWAVE_CACHE_DIR")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["variant"], "lod");
    assert!(dir.path().join("trajectory.csv").exists());
    let energy = std::fs::read_to_string(dir.path().join("energy.csv")).unwrap();
    assert_eq!(energy.lines().next(), Some("n,t,energy"));
}

#[test]
fn errors_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = lodwave()
        .args(["run", "--coarse-level", "2", "--fine-level", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "resolution");
    assert!(report["message"].as_str().unwrap().contains("resolve"));
}

#[test]
fn study_from_config_writes_table_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.json");
    std::fs::write(
        &cfg,
        r#"{"example": {"kind": "example2"}, "coarse_levels": [1, 2], "fine_level": 6, "ell": 1,
            "final_time": 0.25, "variants": ["lod", "standard_fem"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = lodwave()
        .args(["study", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env_remove("LODWAVE_CACHE_DIR")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert!(csv.starts_with("H,ell,variant,error,order,seconds"));
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(out_dir.join("errors.gp").exists());
    assert!(out_dir.join("metadata.json").exists());
}

#[test]
fn study_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"example": {"kind": "example2"}, "coarse_levels": [1], "fine_level": 6, "ell": 1, "typo": 3}"#).unwrap();
    let out = lodwave().args(["study", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["error"], "json");
}

#[test]
fn decay_table_is_monotone() {
    let out = lodwave()
        .args(["decay", "--coarse-level", "2", "--fine-level", "6", "--ell-max", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let vals: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 3);
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}

#[test]
fn correctors_are_cached() {
    let dir = tempfile::tempdir().unwrap();
    let out = lodwave()
        .args(["correctors", "--coarse-level", "2", "--fine-level", "6", "--ell", "1", "--jobs", "2", "--cache-dir"])
        .arg(dir.path())
        .env_remove("LODWAVE_CACHE_DIR")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["stats"]["elements"], 16);
    let file = report["cache_file"].as_str().unwrap();
    assert!(std::path::Path::new(file).exists());
}

#[test]
fn selftest_passes() {
    let out = lodwave().arg("selftest").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}
