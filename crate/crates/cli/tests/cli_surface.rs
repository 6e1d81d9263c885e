//! End-to-end checks of the binary surface: exit codes and the
//! machine-readable error line format.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_orbiflow"))
}

#[test]
fn unknown_subcommand_exits_2_with_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("ERROR usage:"), "got: {err}");
}

#[test]
fn bad_config_reports_code_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "[geometry]\nkind = circle\nwobble = 3\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("ERROR unknown-key:"), "got: {err}");
}

#[test]
fn run_and_verify_succeed_on_a_small_circle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("circle.cfg");
    std::fs::write(
        &cfg,
        "[scenario]\nname = tiny\nsetting = euclidean\n\n[geometry]\nkind = circle\nr = 1.0\nn = 64\n\n[integrator]\nt_max = 0.02\n\n[monitors]\nn = 1\nconvexity = on\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/series.csv").exists());

    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("g-evol"));
    assert!(stdout.contains("PASS"));
}

#[test]
fn dimension_mismatch_has_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mismatch.cfg");
    std::fs::write(&cfg, "[geometry]\nkind = sphere\n\n[monitors]\nn = 1\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("ERROR dimension-mismatch:"), "got: {err}");
}
