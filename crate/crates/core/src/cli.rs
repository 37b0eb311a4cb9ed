//! Command-line front end: `run`, `sweep`, and `validate` subcommands.
//!
//! Configs are JSON documents mirroring [`ExperimentConfig`] plus
//! `output_dir` and an optional `probes` selection list. Overrides layer
//! onto the parsed document before type checking: the `CHAOS_SAMPLER_SEED`
//! environment variable fills `master_seed` only when the file leaves it
//! unset, and repeated `--set key=value` flags assign dot-paths (array
//! indices allowed) in order. Unknown keys anywhere are rejected.
//!
//! Exit codes: 0 success, 1 failed validation check, 2 invalid
//! configuration, 3 numeric failure, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiment::{
    run_experiment, scaling_sweep, write_sweep_summary, ExperimentConfig, ExperimentReport,
    PROBE_NAMES,
};
use crate::validate::run_all;

#[derive(Debug, Parser)]
#[command(
    name = "chaos-sampler",
    version,
    about = "Boson-sampling probes of an integrable-to-chaotic random-matrix crossover"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiment and write report, CSVs, and manifest.
    Run(RunArgs),
    /// Repeat the experiment across mode counts and summarize the scaling.
    Sweep(SweepArgs),
    /// Run the built-in cross-validation checks and print a pass/fail table.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override a config entry by dot-path, e.g. --set master_seed=7 or
    /// --set regimes.0.lambda_cap=5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Output directory; overrides output_dir from the config.
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Mode counts to sweep, comma-separated.
    #[arg(long, value_name = "M,M,...", value_delimiter = ',', required = true)]
    modes: Vec<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Run a single named check instead of the full suite.
    #[arg(long, value_name = "NAME")]
    only: Option<String>,
}

/// Parses arguments from the process environment and dispatches; returns
/// the process exit code.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Fully resolved configuration: typed experiment plus artifact options.
#[derive(Debug)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub output_dir: Option<PathBuf>,
    pub probes: Vec<String>,
}

/// Reads and layers a config file: file < env seed < --set overrides,
/// then type-checks the result.
pub fn load_config(path: &Path, sets: &[String], env_seed: Option<&str>) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    layer_config(value, sets, env_seed)
}

/// Pure layering stage, separated from file I/O for testability.
pub fn layer_config(
    mut value: Value,
    sets: &[String],
    env_seed: Option<&str>,
) -> Result<LoadedConfig> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::InvalidConfig("config root must be a JSON object".into()))?;

    // Env seed applies only where the file is silent, keeping it at the
    // lowest precedence.
    if let Some(seed_text) = env_seed {
        if !obj.contains_key("master_seed") {
            let seed: u64 = seed_text.parse().map_err(|_| {
                Error::InvalidConfig(format!(
                    "CHAOS_SAMPLER_SEED must be an unsigned integer, got {seed_text:?}"
                ))
            })?;
            obj.insert("master_seed".into(), Value::from(seed));
        }
    }

    for assignment in sets {
        apply_override(&mut value, assignment)?;
    }

    let obj = value.as_object_mut().expect("root stays an object");
    let output_dir = match obj.remove("output_dir") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(other) => {
            return Err(Error::InvalidConfig(format!(
                "output_dir must be a string, got {other}"
            )))
        }
    };
    let probes = match obj.remove("probes") {
        None | Some(Value::Null) => PROBE_NAMES.iter().map(|s| s.to_string()).collect(),
        Some(list) => {
            let names: Vec<String> = serde_json::from_value(list)
                .map_err(|e| Error::InvalidConfig(format!("probes: {e}")))?;
            if names.is_empty() {
                return Err(Error::InvalidConfig("probes list must be non-empty".into()));
            }
            for name in &names {
                if !PROBE_NAMES.contains(&name.as_str()) {
                    return Err(Error::InvalidConfig(format!(
                        "unknown probe {name:?}; available: {}",
                        PROBE_NAMES.join(", ")
                    )));
                }
            }
            names
        }
    };

    let experiment: ExperimentConfig = serde_json::from_value(value)
        .map_err(|e| Error::InvalidConfig(format!("config: {e}")))?;
    experiment.validate()?;
    Ok(LoadedConfig {
        experiment,
        output_dir,
        probes,
    })
}

/// Assigns `key=value` into the document. The key is a dot-path whose
/// numeric segments index arrays; the value parses as JSON where possible
/// and falls back to a plain string. Intermediate segments must exist;
/// only the final segment may introduce a new object key.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!("--set expects KEY=VALUE, got {assignment:?}"))
    })?;
    if path.is_empty() {
        return Err(Error::InvalidConfig("--set key must be non-empty".into()));
    }
    let parsed: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let segments: Vec<&str> = path.split('.').collect();
    let mut cursor = root;
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = segment.parse::<usize>() {
            let arr = cursor.as_array_mut().ok_or_else(|| {
                Error::InvalidConfig(format!("--set {path}: segment {segment:?} indexes a non-array"))
            })?;
            let len = arr.len();
            let slot = arr.get_mut(index).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "--set {path}: index {index} out of range (length {len})"
                ))
            })?;
            if last {
                *slot = parsed;
                return Ok(());
            }
            cursor = slot;
        } else {
            let obj = cursor.as_object_mut().ok_or_else(|| {
                Error::InvalidConfig(format!("--set {path}: segment {segment:?} keys a non-object"))
            })?;
            if last {
                obj.insert(segment.to_string(), parsed);
                return Ok(());
            }
            cursor = obj.get_mut(*segment).ok_or_else(|| {
                Error::InvalidConfig(format!("--set {path}: no such key {segment:?}"))
            })?;
        }
    }
    unreachable!("paths have at least one segment")
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// The output directory must already exist; failing here keeps error
/// handling ahead of any computation so no partial files appear.
fn resolve_output_dir(flag: &Option<PathBuf>, config: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag
        .clone()
        .or_else(|| config.clone())
        .ok_or_else(|| Error::InvalidConfig("no output directory (set output_dir or --output)".into()))?;
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("output directory {} does not exist", dir.display()),
        )));
    }
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text.as_bytes())
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_manifest(dir: &Path, seed: u64, threads: usize, started: Instant) -> Result<()> {
    let manifest = serde_json::json!({
        "master_seed": seed,
        "threads": threads,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_text(&dir.join("manifest.json"), &text)
}

fn write_probe_csvs(dir: &Path, report: &ExperimentReport, probes: &[String]) -> Result<usize> {
    let mut written = 0;
    for regime in &report.regimes {
        for probe in probes {
            let series = regime.series.get(probe).ok_or_else(|| {
                Error::NumericFailure(format!("missing series {probe:?} in regime {}", regime.label))
            })?;
            let path = dir.join(format!("{probe}_{}.csv", regime.label));
            write_text(&path, &series.to_csv_string()?)?;
            written += 1;
        }
    }
    Ok(written)
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let started = Instant::now();
    let env_seed = std::env::var("CHAOS_SAMPLER_SEED").ok();
    let loaded = load_config(&args.config, &args.set, env_seed.as_deref())?;
    let dir = resolve_output_dir(&args.output, &loaded.output_dir)?;
    let pool = thread_pool(args.threads)?;
    eprintln!(
        "running: {} regimes, {} times, seed {}",
        loaded.experiment.regimes.len(),
        loaded.experiment.times.len(),
        loaded.experiment.master_seed
    );
    let report = pool.install(|| run_experiment(&loaded.experiment))?;
    eprintln!("experiment done in {:.1}s", started.elapsed().as_secs_f64());
    write_text(&dir.join("report.json"), &report.to_json_string()?)?;
    let n_csv = write_probe_csvs(&dir, &report, &loaded.probes)?;
    write_manifest(
        &dir,
        loaded.experiment.master_seed,
        pool.current_num_threads(),
        started,
    )?;
    eprintln!(
        "wrote report.json, {n_csv} probe CSVs, manifest.json to {}",
        dir.display()
    );
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    let started = Instant::now();
    let env_seed = std::env::var("CHAOS_SAMPLER_SEED").ok();
    let loaded = load_config(&args.run.config, &args.run.set, env_seed.as_deref())?;
    let dir = resolve_output_dir(&args.run.output, &loaded.output_dir)?;
    let pool = thread_pool(args.run.threads)?;
    eprintln!("sweeping mode counts {:?}", args.modes);
    let sweep = pool.install(|| scaling_sweep(&loaded.experiment, &args.modes))?;
    eprintln!("sweep done in {:.1}s", started.elapsed().as_secs_f64());
    for report in &sweep.reports {
        let path = dir.join(format!("report_m{}.json", report.config.modes));
        write_text(&path, &report.to_json_string()?)?;
    }
    let mut buf = Vec::new();
    write_sweep_summary(&sweep.summary, &mut buf)?;
    let summary_text = String::from_utf8(buf)
        .map_err(|e| Error::NumericFailure(format!("summary was not utf-8: {e}")))?;
    write_text(&dir.join("sweep_summary.csv"), &summary_text)?;
    write_manifest(
        &dir,
        loaded.experiment.master_seed,
        pool.current_num_threads(),
        started,
    )?;
    eprintln!(
        "wrote {} reports and sweep_summary.csv to {}",
        sweep.reports.len(),
        dir.display()
    );
    Ok(0)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let checks = run_all(args.only.as_deref())?;
    let mut all_passed = true;
    for check in &checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {:<18} {}", check.name, check.detail);
        all_passed &= check.passed;
    }
    Ok(if all_passed { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn base_doc() -> Value {
        json!({
            "modes": 4,
            "photons": 2,
            "input_pattern": [0, 1, 1, 0],
            "otoc_output": [1, 0, 0, 1],
            "regimes": [
                {"label": "integrable", "lambda_cap": 0.01, "realizations": [2]},
                {"label": "chaotic", "lambda_cap": 100.0, "realizations": [2]}
            ],
            "times": [1.0],
            "sff_ensemble_size": 4,
            "sff_time_grid": {"t_min": 0.5, "t_max": 4.0, "n_points": 4, "spacing": "log"}
        })
    }

    #[test]
    fn override_paths_reach_nested_and_indexed_values() {
        let mut doc = base_doc();
        apply_override(&mut doc, "master_seed=9").unwrap();
        apply_override(&mut doc, "regimes.1.lambda_cap=5.5").unwrap();
        apply_override(&mut doc, "sff_time_grid.n_points=8").unwrap();
        apply_override(&mut doc, "regimes.0.label=poisson").unwrap();
        assert_eq!(doc["master_seed"], json!(9));
        assert_eq!(doc["regimes"][1]["lambda_cap"], json!(5.5));
        assert_eq!(doc["sff_time_grid"]["n_points"], json!(8));
        assert_eq!(doc["regimes"][0]["label"], json!("poisson"));
    }

    #[test]
    fn override_rejects_bad_paths() {
        let mut doc = base_doc();
        assert!(apply_override(&mut doc, "no-equals").is_err());
        assert!(apply_override(&mut doc, "regimes.7.lambda_cap=1").is_err());
        assert!(apply_override(&mut doc, "modes.0=1").is_err());
        assert!(apply_override(&mut doc, "missing.key=1").is_err());
    }

    #[test]
    fn env_seed_yields_to_explicit_config_value() {
        let loaded = layer_config(base_doc(), &[], Some("42")).unwrap();
        assert_eq!(loaded.experiment.master_seed, 42);

        let mut doc = base_doc();
        doc["master_seed"] = json!(7);
        let loaded = layer_config(doc, &[], Some("42")).unwrap();
        assert_eq!(loaded.experiment.master_seed, 7);

        let loaded =
            layer_config(base_doc(), &["master_seed=3".into()], Some("42")).unwrap();
        assert_eq!(loaded.experiment.master_seed, 3);

        assert!(layer_config(base_doc(), &[], Some("not-a-number")).is_err());
    }

    #[test]
    fn probes_selection_is_checked() {
        let loaded = layer_config(base_doc(), &[], None).unwrap();
        assert_eq!(loaded.probes, PROBE_NAMES.to_vec());

        let mut doc = base_doc();
        doc["probes"] = json!(["entropy", "sff"]);
        let loaded = layer_config(doc, &[], None).unwrap();
        assert_eq!(loaded.probes, vec!["entropy", "sff"]);

        let mut doc = base_doc();
        doc["probes"] = json!(["entropyy"]);
        assert!(layer_config(doc, &[], None).is_err());

        let mut doc = base_doc();
        doc["probes"] = json!([]);
        assert!(layer_config(doc, &[], None).is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut doc = base_doc();
        doc["mode_count"] = json!(4);
        let err = layer_config(doc, &[], None).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert_eq!(err.exit_code(), 2);

        let mut doc = base_doc();
        doc["regimes"][0]["lamda_cap"] = json!(2.0);
        assert!(layer_config(doc, &[], None).is_err());
    }

    #[test]
    fn output_dir_and_probes_are_stripped_before_typing() {
        let mut doc = base_doc();
        doc["output_dir"] = json!("/tmp/somewhere");
        doc["probes"] = json!(["otoc"]);
        let loaded = layer_config(doc, &[], None).unwrap();
        assert_eq!(loaded.output_dir, Some(PathBuf::from("/tmp/somewhere")));
        assert_eq!(loaded.probes, vec!["otoc"]);

        let mut doc = base_doc();
        doc["output_dir"] = json!(17);
        assert!(layer_config(doc, &[], None).is_err());
    }

    #[test]
    fn missing_output_dir_is_an_io_error() {
        let err = resolve_output_dir(&Some(PathBuf::from("/no/such/dir-xyz")), &None).unwrap_err();
        assert_eq!(err.exit_code(), 4);
        let err = resolve_output_dir(&None, &None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
