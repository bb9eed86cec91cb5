use std::process::Command;

fn nmqfi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nmqfi"))
}

#[test]
fn bound_state_prints_json() {
    let out = nmqfi().args(["bound-state", "--omega-c", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exists"], true);
    assert!((v["residue"].as_f64().unwrap() - 0.5471).abs() < 1e-3);
    let out = nmqfi().args(["bound-state", "--omega-c", "3"]).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exists"], false);
    assert!(v["energy"].is_null());
}

#[test]
fn config_errors_exit_with_two() {
    let out = nmqfi().args(["bound-state", "--s", "-1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.s"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[params]\nunknown = 1\n").unwrap();
    let out = nmqfi().arg("qfi").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = nmqfi()
        .arg("qfi")
        .arg("--config")
        .arg(dir.path().join("none.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = nmqfi().args(["qfi", "--t-max", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = nmqfi().args(["figure", "3z"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qfi_writes_under_out_and_config_layers_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[params]\nomega_c = 3.0\n[time]\nt_max = 50.0\nsamples = 5\n").unwrap();
    let out = nmqfi()
        .arg("qfi")
        .arg("--config")
        .arg(&cfg)
        .args(["--t-max", "2", "--kappa", "0.1", "--jobs", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("custom/series.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().last().unwrap().starts_with("2.0000000000000000e0,"));
    let manifest = std::fs::read_to_string(dir.path().join("custom/manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["config"]["params"]["omega_c"], 3.0);
    assert_eq!(m["config"]["params"]["kappa"], 0.1);
}

#[test]
fn non_convergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmqfi()
        .args(["evolve-u", "--t-max", "3", "--tol", "1e-15", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("evolve-u/manifest.json").exists());
}

#[test]
fn figure_aliases_resolve() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmqfi()
        .args([
            "figure",
            "2b",
            "--omega-c",
            "9",
            "--n-bar",
            "100",
            "--t-max",
            "10",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("figure2b/omega_c_9.csv").exists());
}
