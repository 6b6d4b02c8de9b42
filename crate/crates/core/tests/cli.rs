//! The `crsense` binary: subcommands, flags, output files and error reporting.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "f_bands = 4\nlevel_step = 0.1\nn_mc = 100\npsi_points = 6\nlambda_points = 6\nslots = 2000\nc_max = [0.1]\n";

fn crsense(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crsense"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), format!("{TINY}{extra}")).unwrap();
    dir
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn help_lists_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(&crsense(dir.path(), &["--help"]));
    for cmd in ["single-band", "train", "simulate", "sweep"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn single_band_writes_csv_to_stdout() {
    let dir = setup("");
    let text = ok(&crsense(dir.path(), &["single-band", "--config", "c.toml", "--out", "-"]));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "c_max,scheme,psi0,psi1,r,cost,sensing_fraction,su_throughput,pu_throughput"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("nonadaptive") && rows[1].contains(",adaptive,"));
}

#[test]
fn bad_configs_are_rejected() {
    let dir = setup("no_such_key = 3\n");
    let out = crsense(dir.path(), &["train", "--config", "c.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let dir = setup("xi = 1.5\n");
    assert!(!crsense(dir.path(), &["train", "--config", "c.toml"]).status.success());
}

#[test]
fn simulate_needs_a_policy() {
    let dir = setup("");
    let out = crsense(dir.path(), &["simulate", "--config", "c.toml", "--policy", "missing.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn train_then_simulate_appends_rows_and_writes_a_trace() {
    let dir = setup("");
    let d = dir.path();
    let printed = ok(&crsense(d, &["train", "--config", "c.toml", "--kernels", "k", "--policy", "p.json"]));
    assert_eq!(printed.trim(), "p.json");
    let kernel_files: Vec<_> = fs::read_dir(d.join("k")).unwrap().collect();
    assert_eq!(kernel_files.len(), 1);

    for _ in 0..2 {
        let line = ok(&crsense(
            d,
            &["simulate", "--config", "c.toml", "--kernels", "k", "--policy", "p.json", "--out", "r.csv", "--trace", "t.csv"],
        ));
        assert!(line.starts_with("T_S "));
    }
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3, "one header and one row per run");
    assert!(lines[0].starts_with("lambda,xi,seed,"));
    assert_eq!(lines[1], lines[2], "same seed, same row");

    let trace = fs::read_to_string(d.join("t.csv")).unwrap();
    assert!(trace.starts_with("slot,occupancy,"));
    assert_eq!(trace.lines().count(), 2001);
}

#[test]
fn seeds_and_models_get_their_own_kernel_files() {
    let dir = setup("");
    let d = dir.path();
    ok(&crsense(d, &["train", "--config", "c.toml", "--kernels", "k", "--seed", "1"]));
    ok(&crsense(d, &["train", "--config", "c.toml", "--kernels", "k", "--seed", "1"]));
    assert_eq!(fs::read_dir(d.join("k")).unwrap().count(), 1, "second run reuses the cache");
    ok(&crsense(d, &["train", "--config", "c.toml", "--kernels", "k", "--seed", "2"]));
    assert_eq!(fs::read_dir(d.join("k")).unwrap().count(), 2);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = setup("sweep_lambda = [0.0, 0.1]\n");
    let d = dir.path();
    ok(&crsense(d, &["sweep", "--config", "c.toml", "--kernels", "k1", "--out", "a.csv", "--jobs", "1"]));
    ok(&crsense(d, &["sweep", "--config", "c.toml", "--kernels", "k2", "--out", "b.csv", "--jobs", "3"]));
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);
}
