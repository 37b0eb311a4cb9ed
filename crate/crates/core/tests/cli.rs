//! Subprocess-level checks of the `chaos-sampler` binary: artifact
//! layout, determinism, seed layering, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chaos-sampler"));
    cmd.env_remove("CHAOS_SAMPLER_SEED");
    cmd
}

/// Small two-regime config that runs in milliseconds.
fn tiny_config_value() -> Value {
    json!({
        "modes": 4,
        "photons": 2,
        "input_pattern": [0, 1, 1, 0],
        "otoc_output": [1, 0, 0, 1],
        "times": [0.7, 2.0],
        "regimes": [
            {"label": "integrable", "lambda_cap": 0.01, "realizations": [3, 3]},
            {"label": "chaotic", "lambda_cap": 100.0, "realizations": [3, 3]}
        ],
        "master_seed": 11,
        "sff_ensemble_size": 40,
        "sff_time_grid": {"t_min": 0.5, "t_max": 4.0, "n_points": 12, "spacing": "log"}
    })
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run_in(dir: &Path, config: &Path, extra: &[&str]) -> Output {
    let out_dir = dir.join("out");
    std::fs::create_dir_all(&out_dir).unwrap();
    binary()
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--output")
        .arg(&out_dir)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn run_writes_the_full_artifact_set_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_value());
    let before = std::fs::read(&config).unwrap();

    let first = run_in(dir.path(), &config, &["--set", "master_seed=7"]);
    assert!(first.status.success(), "stderr: {}", String::from_utf8_lossy(&first.stderr));
    let out_dir = dir.path().join("out");
    let mut names: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut expected = vec!["manifest.json".to_string(), "report.json".to_string()];
    for probe in ["sff", "pt_distance", "entropy", "participation_ratio", "otoc"] {
        for regime in ["integrable", "chaotic"] {
            expected.push(format!("{probe}_{regime}.csv"));
        }
    }
    expected.sort();
    assert_eq!(names, expected, "artifact roster");

    let report_first = std::fs::read(out_dir.join("report.json")).unwrap();
    let second = run_in(dir.path(), &config, &["--set", "master_seed=7"]);
    assert!(second.status.success());
    let report_second = std::fs::read(out_dir.join("report.json")).unwrap();
    assert_eq!(report_first, report_second, "reports must be byte-identical");

    // The input config is never touched.
    assert_eq!(std::fs::read(&config).unwrap(), before);

    let report: Value = serde_json::from_slice(&report_first).unwrap();
    assert_eq!(report["config"]["master_seed"], json!(7));
    assert_eq!(report["d_configs"], json!(6));
}

#[test]
fn env_seed_is_lowest_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = tiny_config_value();
    doc.as_object_mut().unwrap().remove("master_seed");
    let config = write_config(dir.path(), &doc);
    let out_dir = dir.path().join("out");
    std::fs::create_dir_all(&out_dir).unwrap();

    let seed_of = |extra: &[&str]| -> Value {
        let output = binary()
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--output")
            .arg(&out_dir)
            .args(extra)
            .env("CHAOS_SAMPLER_SEED", "123")
            .output()
            .unwrap();
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
        let report: Value =
            serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
        report["config"]["master_seed"].clone()
    };
    assert_eq!(seed_of(&[]), json!(123), "env seed fills the gap");
    assert_eq!(seed_of(&["--set", "master_seed=9"]), json!(9), "--set beats env");
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = tiny_config_value();
    doc["lamda_cap"] = json!(1.0);
    let config = write_config(dir.path(), &doc);
    let output = run_in(dir.path(), &config, &[]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
}

#[test]
fn missing_output_dir_exits_4_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_value());
    let output = binary()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--output")
        .arg(dir.path().join("missing"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stderr).starts_with("error:"));
    let survivors: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(survivors, ["config.json"], "no partial artifacts");
}

#[test]
fn sweep_writes_one_report_per_mode_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_value());
    let out_dir = dir.path().join("out");
    std::fs::create_dir_all(&out_dir).unwrap();
    let output = binary()
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--output")
        .arg(&out_dir)
        .args(["--modes", "4,5"])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    for name in ["report_m4.json", "report_m5.json", "sweep_summary.csv", "manifest.json"] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let summary = std::fs::read_to_string(out_dir.join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per mode count");
    assert!(lines[0].starts_with("modes,d_configs,max_entropy"));
    assert!(lines[1].starts_with("4,6,"));
    assert!(lines[2].starts_with("5,10,"));
}

#[test]
fn sweep_rejects_inconsistent_mode_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &tiny_config_value());
    let output = binary()
        .arg("sweep")
        .arg("--config")
        .arg(&config)
        .arg("--output")
        .arg(dir.path())
        .args(["--modes", "1"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn validate_reports_every_check_and_honors_only() {
    let output = binary().arg("validate").output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4, "one line per check: {stdout}");
    for name in ["permanent", "evolution", "ensemble_moments", "pt_density"] {
        assert!(stdout.contains(name), "missing {name} in {stdout}");
    }
    assert!(lines.iter().all(|l| l.starts_with("PASS")), "{stdout}");

    let output = binary().args(["validate", "--only", "permanent"]).output().unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert!(stdout.contains("permanent"));

    let output = binary().args(["validate", "--only", "bogus"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}
