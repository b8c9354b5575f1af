//! End-to-end tests driving the compiled `cofem` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cofem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cofem"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Drops the wall-clock column so runs from different machines/loads can be
/// compared byte for byte.
fn strip_column(path: &Path, column: usize) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != column)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_and_rerun_with_different_workers_match() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("sweep.cfg");
    fs::write(
        &config_path,
        "\
# small sweep for the integration test
scenario = overlap_sweep
algorithms = multi_task, clustered_cofem
dim = 64
tasks = 4
groups = 2
f-grid = 0, 1
repeats = 2
iterations = 3
num-probes = 4
cg-steps = 16
seed = 9
",
    )
    .unwrap();

    let out_a = dir.path().join("a");
    let status = cofem(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(
        status.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(out_a.join("manifest.json").exists());
    let results = fs::read_to_string(out_a.join("results.csv")).unwrap();
    // Header + 2 f-values x 2 repeats x 2 algorithms.
    assert_eq!(results.lines().count(), 9);

    let out_b = dir.path().join("b");
    let rerun = cofem(&[
        "rerun",
        "--manifest",
        out_a.join("manifest.json").to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--workers",
        "3",
    ]);
    assert!(
        rerun.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&rerun.stderr)
    );
    assert_eq!(
        strip_column(&out_a.join("results.csv"), 10),
        strip_column(&out_b.join("results.csv"), 10)
    );
    assert_eq!(
        strip_column(&out_a.join("iterations.csv"), 11),
        strip_column(&out_b.join("iterations.csv"), 11)
    );
}

#[test]
fn flag_overrides_beat_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("base.cfg");
    fs::write(&config_path, "dim = 64\ntasks = 4\nscenario = overlap_sweep\n").unwrap();
    let out = dir.path().join("out");
    let status = cofem(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--dim",
        "32",
        "--algorithms",
        "clustered_cofem",
        "--f-grid",
        "1",
        "--iterations",
        "2",
        "--num-probes",
        "3",
        "--cg-steps",
        "8",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        status.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let row = results.lines().nth(1).unwrap();
    assert!(row.starts_with("overlap_sweep,clustered_cofem,32,4,"), "{row}");
}

#[test]
fn invalid_inputs_exit_nonzero_with_diagnostics() {
    let out = cofem(&["run", "--scenario", "no_such_scenario"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));

    let out = cofem(&["run", "--sigma", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));

    let out = cofem(&["rerun", "--manifest", "/nonexistent/manifest.json"]);
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_a_loadable_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.simdata");
    let out = cofem(&[
        "simulate",
        "--out",
        path.to_str().unwrap(),
        "--dim",
        "64",
        "--tasks",
        "4",
        "--groups",
        "2",
        "--overlap",
        "1.0",
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let data = cofem::io::read_simdata(&path).unwrap();
    assert_eq!(data.tasks.len(), 4);
    assert_eq!(data.dim(), 64);
}

#[test]
fn mem_reports_the_analytic_footprint() {
    let out = cofem(&[
        "mem",
        "--algorithm",
        "clustered_em",
        "--dim",
        "1000",
        "--tasks",
        "1",
        "--clusters",
        "1",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("clustered_em"), "{stdout}");
    assert!(stdout.contains("bytes"), "{stdout}");
}
