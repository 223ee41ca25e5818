use std::fs;
use std::path::Path;
use std::process::Command;

use piezobeam_cli::scenario::{read_energy_csv, FailureManifest};
use piezobeam_cli::{compare_runs, parse_config, run_scenario, AnalysisReport, CliError, Tolerances};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_piezobeam");

fn short(preset: &str, extra: &str) -> String {
    format!(
        r#"{{"preset": "{preset}", "grid": {{"n_cells": 24, "n_modes": 24}}, "time": {{"t_end": 1.5}}{extra}}}"#
    )
}

fn report(dir: &Path) -> AnalysisReport {
    serde_json::from_str(&fs::read_to_string(dir.join("analysis.json")).unwrap()).unwrap()
}

fn piezobeam(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env_remove("PIEZOBEAM_OUTPUT_ROOT")
        .output()
        .unwrap()
}

#[test]
fn default_scenario_runs_and_writes_artifacts() {
    let tmp = TempDir::new().unwrap();
    let out = piezobeam(&["run"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("piezobeam-out");
    for name in ["scenario.json", "energy.csv", "final.snapshot.csv", "analysis.json"] {
        assert!(dir.join(name).is_file(), "missing {name}");
    }
    assert!(!dir.join("failures.json").exists());
    let rep = report(&dir);
    assert!(rep.passed);
    assert_eq!(rep.run.unwrap().energy_increases, 0);
}

#[test]
fn degenerate_coupling_is_rejected_with_exit_code_2() {
    let tmp = TempDir::new().unwrap();
    // alpha = gamma^2 beta makes the charge equation lose coercivity
    fs::write(
        tmp.path().join("bad.json"),
        r#"{"beam": {"alpha": 4.0, "beta": 1.0, "gamma": 2.0}, "grid": {"n_cells": 3}}"#,
    )
    .unwrap();
    let out = piezobeam(&["run", "bad.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beam.alpha - gamma^2*beta must be > 0"), "{err}");
    assert!(err.contains("grid.n_cells"), "{err}");
    assert!(!tmp.path().join("piezobeam-out").exists());
}

#[test]
fn malformed_json_reports_position() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.json"), "{\n  \"grid\": {\"n_cells\": }\n}").unwrap();
    match parse_config(&fs::read_to_string(tmp.path().join("c.json")).unwrap(), tmp.path()) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected parse error, got {other:?}"),
    }
    let out = piezobeam(&["check", "c.json"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_state_succeeds_at_rest() {
    let tmp = TempDir::new().unwrap();
    let cfg = parse_config(
        &short(
            "paper-thermal",
            r#", "initial": "zero", "analyses": {"decay_fit": true, "lyapunov": true}"#,
        ),
        tmp.path(),
    )
    .unwrap();
    let outcome = run_scenario(&cfg, tmp.path(), Some(tmp.path())).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let run = outcome.report.run.unwrap();
    assert_eq!(run.energy_initial, 0.0);
    assert_eq!(run.energy_final, 0.0);
    let log = read_energy_csv(&fs::read_to_string(outcome.output_dir.join("energy.csv")).unwrap()).unwrap();
    assert!(log.iter().all(|r| r.energy == 0.0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = parse_config(&short("paper-nonthermal", ""), tmp.path()).unwrap();
    let mut logs = Vec::new();
    for name in ["a", "b"] {
        let mut c = cfg.clone();
        c.output_dir = name.into();
        let o = run_scenario(&c, tmp.path(), Some(tmp.path())).unwrap();
        logs.push((
            fs::read(o.output_dir.join("energy.csv")).unwrap(),
            fs::read(o.output_dir.join("final.snapshot.csv")).unwrap(),
        ));
    }
    assert_eq!(logs[0], logs[1]);
    let cmp = compare_runs(&tmp.path().join("a"), &tmp.path().join("b"), Tolerances::default()).unwrap();
    assert!(cmp.aligned && cmp.within_tolerance);
    assert!(cmp.columns.iter().all(|c| c.max_abs == 0.0));
}

#[test]
fn restart_from_written_snapshot_continues_the_log() {
    let tmp = TempDir::new().unwrap();
    let full = parse_config(&short("paper-thermal", r#", "output_dir": "full""#), tmp.path()).unwrap();
    let full_run = run_scenario(&full, tmp.path(), Some(tmp.path())).unwrap();

    let mut first = full.clone();
    first.time.t_end = 0.75;
    first.output_dir = "first".into();
    let first_run = run_scenario(&first, tmp.path(), Some(tmp.path())).unwrap();
    let dt = first_run.report.run.as_ref().unwrap().dt;
    assert_eq!(dt, full_run.report.run.as_ref().unwrap().dt);

    let mut second = full.clone();
    second.initial = "first/final.snapshot.csv".into();
    second.output_dir = "second".into();
    let second_run = run_scenario(&second, tmp.path(), Some(tmp.path())).unwrap();

    let read = |dir: &Path| read_energy_csv(&fs::read_to_string(dir.join("energy.csv")).unwrap()).unwrap();
    let whole = read(&full_run.output_dir);
    let tail = read(&second_run.output_dir);
    assert_eq!(tail.last().unwrap().energy, whole.last().unwrap().energy);
    assert_eq!(tail.last().unwrap().t, whole.last().unwrap().t);
}

#[test]
fn kernel_only_mode_writes_node_tables_without_simulating() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("k.json"), short("paper-nonthermal", "")).unwrap();
    let out = piezobeam(&["validate-kernel", "k.json", "--out", "kern"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let dir = tmp.path().join("kern");
    assert!(!dir.join("energy.csv").exists());
    let rep = report(&dir);
    assert!(rep.run.is_none());
    assert_eq!(rep.kernel.len(), 2);
    for i in 1..=2 {
        let table = fs::read_to_string(dir.join(format!("kernel_nodes_{i}.csv"))).unwrap();
        let mut lines = table.lines();
        assert_eq!(lines.next(), Some("k,xi,weight,mu"));
        assert_eq!(lines.count(), 24);
    }
}

#[test]
fn output_root_flag_and_env_relocate_relative_outputs() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("s.json"), short("paper-nonthermal", r#", "output_dir": "rel""#)).unwrap();
    let out = piezobeam(&["run", "s.json", "--output-root", "flagroot"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("flagroot/rel/analysis.json").is_file());

    let out = Command::new(BIN)
        .args(["run", "s.json"])
        .current_dir(tmp.path())
        .env("PIEZOBEAM_OUTPUT_ROOT", tmp.path().join("envroot"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("envroot/rel/analysis.json").is_file());
}

#[test]
fn thermal_run_fits_faster_decay_than_nonthermal() {
    let tmp = TempDir::new().unwrap();
    let mut omega = Vec::new();
    for preset in ["paper-thermal", "paper-nonthermal"] {
        let text = format!(
            r#"{{"preset": "{preset}", "grid": {{"n_cells": 24, "n_modes": 24}}, "time": {{"t_end": 60, "report_cadence": 10}},
                "decay_window": [30, 60], "analyses": {{"decay_fit": true}}, "output_dir": "{preset}"}}"#
        );
        let o = run_scenario(&parse_config(&text, tmp.path()).unwrap(), tmp.path(), Some(tmp.path())).unwrap();
        assert_eq!(o.exit_code(), 0);
        omega.push(o.report.decay.unwrap().rate_omega);
    }
    assert!(omega[0] > omega[1], "thermal {} vs nonthermal {}", omega[0], omega[1]);
}

#[test]
fn analyze_and_compare_work_offline() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("s.json"), short("paper-thermal", "")).unwrap();
    assert_eq!(piezobeam(&["run", "s.json"], tmp.path()).status.code(), Some(0));
    let out = piezobeam(&["analyze", "piezobeam-out"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(tmp.path().join("piezobeam-out/offline_analysis.json").is_file());

    let out = piezobeam(&["compare", "piezobeam-out", "piezobeam-out"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"within_tolerance\": true"));
}

#[test]
fn compare_rejects_unknown_schema_version() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("s.json"), short("paper-nonthermal", "")).unwrap();
    assert_eq!(piezobeam(&["run", "s.json"], tmp.path()).status.code(), Some(0));
    let path = tmp.path().join("piezobeam-out/analysis.json");
    let text = fs::read_to_string(&path).unwrap().replacen("\"schema_version\": 1", "\"schema_version\": 7", 1);
    fs::write(&path, text).unwrap();
    let dir = tmp.path().join("piezobeam-out");
    assert!(matches!(compare_runs(&dir, &dir, Tolerances::default()), Err(CliError::Schema(_))));
    assert_eq!(piezobeam(&["compare", "piezobeam-out", "piezobeam-out"], tmp.path()).status.code(), Some(2));
}

#[test]
fn failed_check_writes_manifest_and_exits_1() {
    let tmp = TempDir::new().unwrap();
    // two samples are too few for a decay fit
    fs::write(
        tmp.path().join("s.json"),
        short("paper-nonthermal", r#", "analyses": {"decay_fit": true}, "decay_window": [1.4, 1.5]"#),
    )
    .unwrap();
    let out = piezobeam(&["run", "s.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let text = fs::read_to_string(tmp.path().join("piezobeam-out/failures.json")).unwrap();
    let manifest: FailureManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(manifest.failures.len(), 1);
    assert_eq!(manifest.failures[0].name, "decay_fit");
}
