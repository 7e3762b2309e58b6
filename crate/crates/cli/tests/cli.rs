use std::process::Command;

fn stl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stl"))
        .args(args)
        .env_remove("STL_DATA_DIR")
        .output()
        .unwrap()
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let out = stl(&["--experiment", "bogus", "--synthetic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));
}

#[test]
fn missing_data_source_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stl(&[
        "--experiment",
        "tilt",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_data_files_fail_with_the_path() {
    let data = tempfile::tempdir().unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = stl(&[
        "--experiment",
        "tilt",
        "--data-dir",
        data.path().to_str().unwrap(),
        "--out-dir",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(".csv"));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "experiment = \"grid\"\nsynthetic = true\ngrid_top_k = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = stl(&[
        "--config",
        cfg.to_str().unwrap(),
        "--experiment",
        "tilt",
        "--cost-bps",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_dir.join("tilt/tilt.csv").exists());
    assert!(!out_dir.join("grid").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"cost_bps\": 5.0"));
    assert!(manifest.contains("\"grid_top_k\": 3"));
}

#[test]
fn bad_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "not_a_field = 1\n").unwrap();
    let out = stl(&["--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
}
