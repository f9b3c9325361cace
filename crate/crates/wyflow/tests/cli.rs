//! End-to-end tests of the `wyflow` binary: exit codes, stdout contracts,
//! artifact layout, config-file handling, and bitwise reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn wyflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wyflow"))
        .args(args)
        .output()
        .expect("spawn wyflow")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn list_prints_the_six_presets() {
    let out = wyflow(&["run", "--list"]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let names: Vec<&str> = ["positive_cap", "positive_cap_perturbed", "zero_flat_constant",
        "zero_flat_perturbed", "negative_weighted", "hyperbolic_weighted"]
        .to_vec();
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, names);
}

#[test]
fn help_and_version_exit_zero() {
    let help = wyflow(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("wyflow"));
    let version = wyflow(&["--version"]);
    assert_eq!(code(&version), 0);
}

#[test]
fn steady_scenario_converges_in_zero_steps_and_writes_artifacts() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o");
    let out = wyflow(&[
        "run",
        "--scenario",
        "zero_flat_constant",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("case=zero"), "stdout: {text}");
    assert!(text.contains("converged=true"), "stdout: {text}");
    assert!(text.contains("steps=0"), "stdout: {text}");
    for name in ["summary.json", "trace.csv", "w_final.csv", "R_final.csv", "config.resolved.ini"]
    {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }
    let summary = fs::read_to_string(out_dir.join("summary.json")).unwrap();
    assert!(summary.contains("\"scenario\": \"zero_flat_constant\""), "summary: {summary}");
    assert!(summary.contains("\"converged\": true"), "summary: {summary}");
}

#[test]
fn exhausted_step_budget_exits_two() {
    let dir = TempDir::new().unwrap();
    let out = wyflow(&[
        "run",
        "--scenario",
        "positive_cap_perturbed",
        "--mesh",
        "64",
        "--max-steps",
        "1",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stdout: {} stderr: {}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("converged=false"));
}

#[test]
fn classify_reports_all_three_sign_cases() {
    for (scenario, case) in [
        ("positive_cap", "positive"),
        ("zero_flat_constant", "zero"),
        ("negative_weighted", "negative"),
    ] {
        let out = wyflow(&["classify", "--scenario", scenario, "--mesh", "64"]);
        assert_eq!(code(&out), 0, "{scenario} stderr: {}", stderr(&out));
        let text = stdout(&out);
        assert!(
            text.starts_with(case),
            "{scenario}: expected leading '{case}', got '{text}'"
        );
        assert!(text.contains("lambda0 ="), "{scenario}: {text}");
    }
}

#[test]
fn spectrum_rejects_more_modes_than_nodes() {
    let out = wyflow(&["spectrum", "--scenario", "zero_flat_constant", "--mesh", "64", "--k", "70"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("requested 70 modes"), "stderr: {}", stderr(&out));
}

#[test]
fn spectrum_prints_one_line_per_mode_and_writes_tables() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o");
    let out = wyflow(&[
        "spectrum",
        "--scenario",
        "zero_flat_constant",
        "--mesh",
        "96",
        "--k",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    for a in 0..3 {
        assert!(text.contains(&format!("lambda_{a} = ")), "stdout: {text}");
    }
    assert!(out_dir.join("spectrum.csv").is_file());
    assert!(out_dir.join("modes.csv").is_file());
    let table = fs::read_to_string(out_dir.join("spectrum.csv")).unwrap();
    assert_eq!(table.lines().count(), 4, "header + 3 modes: {table}");
}

#[test]
fn missing_scenario_and_config_is_a_usage_error() {
    let out = wyflow(&["run"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nothing to do"), "stderr: {}", stderr(&out));
}

#[test]
fn unknown_cli_flag_exits_one() {
    let out = wyflow(&["run", "--scenario", "zero_flat_constant", "--frobnicate"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn unknown_config_key_is_rejected_with_its_line_number() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.ini");
    fs::write(&path, "[flow]\nbogus = 1\n").unwrap();
    let out = wyflow(&[
        "run",
        "--scenario",
        "zero_flat_constant",
        "--config",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("line 2"), "stderr: {err}");
    assert!(err.contains("bogus"), "stderr: {err}");
}

#[test]
fn unreadable_config_path_exits_one() {
    let out = wyflow(&["run", "--config", "/nonexistent/nowhere.ini"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nowhere.ini"), "stderr: {}", stderr(&out));
}

#[test]
fn invalid_format_value_exits_one() {
    let out = wyflow(&["run", "--scenario", "zero_flat_constant", "--format", "xml"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown format"), "stderr: {}", stderr(&out));
}

#[test]
fn verify_fails_honestly_on_an_unattainable_threshold() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("strict.ini");
    fs::write(&path, "[verify]\nmin_order = 50\nseeds = 1\nsizes = 48, 96, 192\n").unwrap();
    let out = wyflow(&[
        "verify",
        "--scenario",
        "zero_flat_constant",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "stdout: {}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("FAIL curvature_refinement"), "stdout: {text}");
    assert!(text.contains("FAIL ibp_refinement"), "stdout: {text}");
}

#[test]
fn verify_passes_on_a_stock_scenario() {
    let dir = TempDir::new().unwrap();
    let out = wyflow(&[
        "verify",
        "--scenario",
        "zero_flat_constant",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stdout: {} stderr: {}", stdout(&out), stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("PASS ").count(), 5, "stdout: {text}");
    assert!(dir.path().join("o").join("refinement_curvature.csv").is_file());
    assert!(dir.path().join("o").join("refinement_ibp.csv").is_file());
}

fn run_into(out_dir: &Path) {
    let out = wyflow(&[
        "run",
        "--scenario",
        "positive_cap",
        "--mesh",
        "128",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn identical_configurations_reproduce_artifacts_bitwise() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_into(&a);
    run_into(&b);
    for name in ["trace.csv", "summary.json", "w_final.csv", "R_final.csv"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} differs between identical runs");
    }
}

#[test]
fn resolved_config_echo_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    run_into(&first);
    let echoed = first.join("config.resolved.ini");
    let second = dir.path().join("second");
    let out = wyflow(&[
        "run",
        "--config",
        echoed.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let left = fs::read(first.join("trace.csv")).unwrap();
    let right = fs::read(second.join("trace.csv")).unwrap();
    assert_eq!(left, right, "echoed config must reproduce the trace bitwise");
}

#[test]
fn json_format_swaps_table_artifacts() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("o");
    let out = wyflow(&[
        "run",
        "--scenario",
        "zero_flat_constant",
        "--format",
        "json",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for name in ["trace.json", "w_final.json", "R_final.json", "summary.json"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    assert!(!out_dir.join("trace.csv").exists());
    let trace: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("trace.json")).unwrap()).unwrap();
    assert!(trace["columns"].as_array().is_some());
    assert!(trace["rows"].as_array().is_some());
}
