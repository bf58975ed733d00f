//! End-to-end runs of the command-line driver.

use std::process::Command;

use nlslab::spectral_core::io::read_snapshot;

fn nlslab(args: &[&str], dir: &std::path::Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlslab"))
        .args(args)
        .arg("--outdir")
        .arg(dir)
        .output()
        .expect("spawn nlslab")
}

#[test]
fn dispersion_passes_and_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlslab(&["dispersion"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{stdout}");
    let csv = std::fs::read_to_string(dir.path().join("dispersion.csv")).unwrap();
    assert!(csv.starts_with("# nlslab dispersion v1\nk,measured,exact,rel_error\n"));
    let gp = std::fs::read_to_string(dir.path().join("plots.gp")).unwrap();
    assert!(gp.contains("'dispersion.csv'") && !gp.contains("'energy.csv'"));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn stated_kernel_forms_fail_and_corrected_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlslab(&["kernels", "--family", "b01", "--points", "11"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = nlslab(&["kernels", "--family", "b01", "--points", "11", "--corrected"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = std::fs::read_to_string(dir.path().join("kernels.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2 + 5 * 4 * 11);
}

#[test]
fn simulate_writes_readable_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "epsilons = 0.1\nT0 = 0.02\n").unwrap();
    let out = nlslab(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let (h, fields) = read_snapshot(&dir.path().join("final")).unwrap();
    assert_eq!(h.components, vec!["rho", "v"]);
    assert!((h.t - 2.0).abs() < 1e-9);
    assert!(fields.iter().all(|f| f.samples().iter().all(|c| c.re.is_finite())));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epsilonz = 0.1\n").unwrap();
    let out = nlslab(&["--config", cfg.to_str().unwrap(), "nls"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsilonz"));
}
