//! End-to-end tests of the `slowmix` binary: exit codes, config
//! validation, determinism of the emitted files.

use std::path::Path;
use std::process::{Command, Output};

fn slowmix(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slowmix"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn summary_without_wall_clock(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(name).join("summary.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["wall_clock_seconds"] = serde_json::json!(0.0);
    v
}

const SMALL_CONFIG: &str = r#"
[experiment]
kind = "return-tail"
name = "tail-run"
seed = 123

[system]
map = "intermittent"
gamma = 0.5

[params]
samples = 20000
n_grid_min = 5
n_grid_max = 200
n_grid_points = 8
cap = 100000
"#;

#[test]
fn list_prints_all_nine_kinds_in_stable_order() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = slowmix(&["list"], dir.path());
    assert!(out1.status.success());
    let text1 = String::from_utf8(out1.stdout).unwrap();
    for kind in [
        "mld",
        "ld",
        "return-tail",
        "ulam-decay",
        "billiard-invariance",
        "hitting",
        "point-process",
        "l-alpha-s",
        "gmy-diagnostics",
    ] {
        assert!(text1.contains(kind), "missing kind {kind}");
    }
    let out2 = slowmix(&["list"], dir.path());
    assert_eq!(text1, String::from_utf8(out2.stdout).unwrap());
}

#[test]
fn run_produces_summary_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_CONFIG).unwrap();
    let out = slowmix(&["run", "cfg.toml"], dir.path());
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run_dir = dir.path().join("out").join("tail-run");
    assert!(run_dir.join("summary.json").exists());
    assert!(run_dir.join("return_tail.csv").exists());
    let summary = summary_without_wall_clock(&dir.path().join("out"), "tail-run");
    assert_eq!(summary["kind"], "return-tail");
    assert_eq!(summary["seed"], 123);
    assert!(summary["metrics"]["fit"]["slope"].as_f64().unwrap() < 0.0);
    // CSV headers name the estimated quantity.
    let csv = std::fs::read_to_string(run_dir.join("return_tail.csv")).unwrap();
    assert!(csv.starts_with("N_iterations,prob_R_gt_N,wilson_halfwidth_95"));
}

#[test]
fn identical_runs_are_byte_identical_modulo_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_CONFIG).unwrap();
    let out1 = slowmix(&["run", "cfg.toml", "--out", "a"], dir.path());
    let out2 = slowmix(&["run", "cfg.toml", "--out", "b"], dir.path());
    assert!(out1.status.success() && out2.status.success());
    let sa = summary_without_wall_clock(&dir.path().join("a"), "tail-run");
    let mut sb = summary_without_wall_clock(&dir.path().join("b"), "tail-run");
    sb["config"]["output"] = sa["config"]["output"].clone();
    assert_eq!(sa, sb);
    let csv_a = std::fs::read(dir.path().join("a/tail-run/return_tail.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b/tail-run/return_tail.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn worker_count_does_not_change_the_numbers() {
    let dir = tempfile::tempdir().unwrap();
    // An ensemble-parallel experiment exercises the reduction path.
    let cfg = r#"
[experiment]
kind = "mld"
name = "mld-run"
seed = 5

[system]
map = "intermittent"
gamma = 0.5

[params]
ensemble = 500
n_grid_min = 20
n_grid_max = 100
n_grid_points = 5
n_max = 200
"#;
    std::fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    let out1 = slowmix(
        &["run", "cfg.toml", "--out", "a", "--workers", "1"],
        dir.path(),
    );
    let out2 = slowmix(
        &["run", "cfg.toml", "--out", "b", "--workers", "3"],
        dir.path(),
    );
    assert!(
        out1.status.success() && out2.status.success(),
        "stderr: {} / {}",
        String::from_utf8_lossy(&out1.stderr),
        String::from_utf8_lossy(&out2.stderr)
    );
    let sa = summary_without_wall_clock(&dir.path().join("a"), "mld-run");
    let sb = summary_without_wall_clock(&dir.path().join("b"), "mld-run");
    assert_eq!(sa["metrics"], sb["metrics"]);
    // The mld summary reports a fitted slope and the sup-truncation
    // horizon alongside the sensitivity check.
    assert!(sa["metrics"]["fit"]["slope"].is_number());
    assert_eq!(sa["metrics"]["truncation_horizon"], 200);
    assert!(sa["metrics"]["truncation_sensitivity"]["max_pointwise_diff"].is_number());
    let csv_a = std::fs::read(dir.path().join("a/mld-run/mld_tail.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b/mld-run/mld_tail.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn missing_kind_is_a_named_validation_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[experiment]\nseed = 1\n").unwrap();
    let out = slowmix(&["run", "cfg.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("experiment.kind"), "stderr: {stderr}");
}

#[test]
fn invalid_field_value_names_the_field_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[experiment]\nkind = \"mld\"\n[system]\ngamma = 1.5\n";
    std::fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    let out = slowmix(&["run", "cfg.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("system.gamma"), "stderr: {stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[experiment]\nkind = \"mld\"\n[params]\nno_such_knob = 1\n";
    std::fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    let out = slowmix(&["run", "cfg.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sub_experiment_failure_reports_and_exits_1() {
    // An ensemble too small for the exponential-law check makes every
    // radius fail; the run still writes its summary with the failures
    // recorded, and the process exits 1.
    let dir = tempfile::tempdir().unwrap();
    let out = slowmix(&["hitting", "--ensemble", "50", "--out", "h"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text =
        std::fs::read_to_string(dir.path().join("h").join("hitting").join("summary.json"))
            .unwrap();
    let summary: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(!summary["failures"].as_array().unwrap().is_empty());
}

#[test]
fn kind_subcommand_runs_with_defaults_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let out = slowmix(
        &[
            "gmy-diagnostics",
            "--samples",
            "500",
            "--seed",
            "9",
            "--out",
            "g",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = summary_without_wall_clock(&dir.path().join("g"), "gmy-diagnostics");
    assert!(summary["metrics"]["rho_hat"].as_f64().unwrap() < 1.0);
}
