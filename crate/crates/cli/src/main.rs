//! Command-line front end for the experiment presets.
//!
//! Exit codes: 0 on success, 1 when any cell or property failed, 2 for
//! configuration problems. Worker count comes from the `ZOPS_WORKERS`
//! environment variable when set.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zops_core::error::{Error, Result};
use zops_core::harness::{
    export_env, run_preset_to_csv, run_properties, summary_table, tune_preset, ExperimentConfig,
    Preset, WORKERS_ENV,
};

#[derive(Parser)]
#[command(
    name = "zops",
    version,
    about = "Parameter-space vs action-space exploration benchmarks",
    after_help = "Set ZOPS_WORKERS to bound the worker pool."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Dotted-path override applied after the file, e.g. `olr.rounds=1000`.
    /// Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a preset end to end (tuning included) and write its CSV.
    Run {
        /// Preset name, e.g. olr-dim-sweep or validate-properties.
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV destination; defaults to <preset>.csv in the working
        /// directory.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run only a preset's tuning stage and print the selections.
    Tune {
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the fixed-seed property suite and print its report.
    Validate {
        /// Also write the report to this file.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print a preset's pinned environment as JSON so it can be shared.
    ExportEnv {
        preset: String,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the JSON here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Build the effective config: file (or defaults), then overrides, then the
/// positional preset name, which always wins.
fn load_config(preset: &str, args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if !args.overrides.is_empty() {
        cfg = cfg.with_overrides(&args.overrides)?;
    }
    cfg.preset = Preset::parse(preset)?;
    cfg.validate()?;
    Ok(cfg)
}

fn config_failure(e: Error) -> ExitCode {
    eprintln!("configuration error: {e}");
    ExitCode::from(2)
}

fn run_failure(e: Error) -> ExitCode {
    eprintln!("run failed: {e}");
    ExitCode::from(1)
}

fn cmd_run(preset: &str, args: &ConfigArgs, out: Option<PathBuf>) -> ExitCode {
    let cfg = match load_config(preset, args) {
        Ok(cfg) => cfg,
        Err(e) => return config_failure(e),
    };
    let out_path = out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.preset.name())));
    let output = match run_preset_to_csv(&cfg, &out_path) {
        Ok(output) => output,
        Err(e) => return run_failure(e),
    };
    println!("{}", summary_table(&output.summary));
    println!(
        "{} rows -> {} ({} workers)",
        output.records.len(),
        out_path.display(),
        zops_core::harness::worker_count()
    );
    if output.failed_cells > 0 {
        eprintln!("{} cell(s) failed; see error rows", output.failed_cells);
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn cmd_tune(preset: &str, args: &ConfigArgs) -> ExitCode {
    let cfg = match load_config(preset, args) {
        Ok(cfg) => cfg,
        Err(e) => return config_failure(e),
    };
    let lines = match tune_preset(&cfg) {
        Ok(lines) => lines,
        Err(e) => return run_failure(e),
    };
    for line in lines {
        if line.mean_score.is_finite() {
            println!(
                "{}: {} (mean tuning score {:.6})",
                line.algorithm, line.chosen, line.mean_score
            );
        } else {
            println!("{}: {}", line.algorithm, line.chosen);
        }
    }
    ExitCode::SUCCESS
}

fn cmd_validate(out: Option<PathBuf>) -> ExitCode {
    let results = run_properties(None);
    let mut report = String::new();
    let mut failed = 0usize;
    for r in &results {
        let line = format!(
            "[{}] {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
        println!("{line}");
        report.push_str(&line);
        report.push('\n');
        if !r.passed {
            failed += 1;
        }
    }
    let tail = format!("{} of {} properties passed", results.len() - failed, results.len());
    println!("{tail}");
    report.push_str(&tail);
    report.push('\n');
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, report) {
            return run_failure(e.into());
        }
    }
    if failed > 0 {
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

fn cmd_export_env(preset: &str, args: &ConfigArgs, out: Option<&Path>) -> ExitCode {
    let cfg = match load_config(preset, args) {
        Ok(cfg) => cfg,
        Err(e) => return config_failure(e),
    };
    let json = match export_env(&cfg) {
        Ok(json) => json,
        // Nothing exportable is a usage problem, not a failed run.
        Err(e @ Error::Config(_)) => return config_failure(e),
        Err(e) => return run_failure(e),
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, json) {
                return run_failure(e.into());
            }
        }
        None => println!("{json}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    // Surface a bad worker override early rather than inside the pool.
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if v.parse::<usize>().map(|n| n == 0).unwrap_or(true) {
            eprintln!("configuration error: {WORKERS_ENV}={v} is not a positive integer");
            return ExitCode::from(2);
        }
    }
    match Cli::parse().command {
        Command::Run { preset, cfg, out } => cmd_run(&preset, &cfg, out),
        Command::Tune { preset, cfg } => cmd_tune(&preset, &cfg),
        Command::Validate { out } => cmd_validate(out),
        Command::ExportEnv { preset, cfg, out } => cmd_export_env(&preset, &cfg, out.as_deref()),
    }
}
