//! `edgesim`: run a scenario file and write its trace and metrics.
//!
//! Exit codes: 0 on success, 1 for usage or validation errors (nothing was
//! simulated), 2 when the run itself or writing its output fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use edgesim_core::scenario::{
    parse_config, run_scenario, DatasetKind, ScenarioConfig, ScenarioError,
};

#[derive(Debug, Parser)]
#[command(
    name = "edgesim",
    version,
    about = "Discrete-event simulator for collaborative edge learning"
)]
struct Args {
    /// Scenario file to run.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Overrides the scenario's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Overrides the stop time, in simulated seconds.
    #[arg(long, value_name = "SECONDS", value_parser = parse_seconds)]
    until: Option<u64>,

    /// Trace output; defaults to the config path with a `.trace` extension.
    #[arg(long, value_name = "PATH")]
    trace_out: Option<PathBuf>,

    /// Metrics output; defaults to the config path with a `.metrics` extension.
    #[arg(long, value_name = "PATH")]
    metrics_out: Option<PathBuf>,

    /// Do not print the metrics summary.
    #[arg(long)]
    quiet: bool,
}

/// Seconds as a decimal, converted to whole nanoseconds.
fn parse_seconds(s: &str) -> Result<u64, String> {
    let secs: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not a number of seconds"))?;
    if !secs.is_finite() || secs < 0.0 {
        return Err(format!(
            "`{s}` must be a finite, non-negative number of seconds"
        ));
    }
    let ns = (secs * 1e9).round();
    if ns > u64::MAX as f64 {
        return Err(format!("`{s}` seconds overflows the nanosecond clock"));
    }
    Ok(ns as u64)
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn load(args: &Args) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = parse_config(&text).map_err(|e| {
        Failure::Usage(format!("{}: invalid scenario:\n{e}", args.config.display()))
    })?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(ns) = args.until {
        config.stop_at_ns = ns;
    }
    // dataset files are named relative to the scenario file
    if let DatasetKind::File(path) = &mut config.dataset.kind {
        if path.is_relative() {
            if let Some(dir) = args.config.parent() {
                *path = dir.join(&*path);
            }
        }
    }
    Ok(config)
}

fn run(args: &Args) -> Result<(), Failure> {
    let config = load(args)?;
    let trace_out = args
        .trace_out
        .clone()
        .unwrap_or_else(|| args.config.with_extension("trace"));
    let metrics_out = args
        .metrics_out
        .clone()
        .unwrap_or_else(|| args.config.with_extension("metrics"));
    let metrics = run_scenario(&config, &trace_out, &metrics_out).map_err(|e| match e {
        ScenarioError::Config(errs) => Failure::Usage(format!("invalid scenario:\n{errs}")),
        other => Failure::Runtime(other.to_string()),
    })?;
    if !args.quiet {
        print!("{}", metrics.render_human());
        println!("trace written to {}", trace_out.display());
        println!("metrics written to {}", metrics_out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
