//! `wallinfer` command-line front end.
//!
//! Each run writes `resolved_config.json` plus a result JSON (and CSVs where useful) to
//! the output directory. Failures print a JSON report on stderr and exit with 2
//! (configuration), 3 (data or input) or 4 (numerical).

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Output;
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "wallinfer", version, about = "Wall thermal-property inference from boundary monitoring data")]
struct Cli {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Raw campaign CSV (overrides paths.input).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory (overrides paths.output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Average, smooth and characterize the noise of a raw campaign.
    Preprocess,
    /// Posterior maximum.
    Fit,
    /// Posterior maximum with Gaussian covariance.
    Laplace,
    /// Random-walk Metropolis sampling started at the maximum.
    Mcmc,
    /// Compare initial-profile models by AIC.
    AicCompare,
    /// Information gain over growing windows.
    Infogain,
    /// Split the record into external-temperature cycles and rank them by gain.
    Cycles,
    /// Subsampling study of estimate variability.
    Robustness,
    /// Generate a synthetic campaign.
    Simulate,
    /// Flux predictions with 95% bands.
    Predict,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Fit => "fit",
            Command::Laplace => "laplace",
            Command::Mcmc => "mcmc",
            Command::AicCompare => "aic-compare",
            Command::Infogain => "infogain",
            Command::Cycles => "cycles",
            Command::Robustness => "robustness",
            Command::Simulate => "simulate",
            Command::Predict => "predict",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &cli.input {
        cfg.paths.input = Some(p.clone());
    }
    if let Some(p) = &cli.output {
        cfg.paths.output_dir = p.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = Output::create(&cfg.paths.output_dir)?;
    out.json("resolved_config.json", cfg)?;
    match cli.command {
        Command::Preprocess => commands::preprocess(cfg, &out),
        Command::Fit => commands::fit(cfg, &out),
        Command::Laplace => commands::laplace(cfg, &out),
        Command::Mcmc => commands::mcmc(cfg, &out),
        Command::AicCompare => commands::aic(cfg, &out),
        Command::Infogain => commands::infogain(cfg, &out),
        Command::Cycles => commands::cycles(cfg, &out),
        Command::Robustness => commands::robustness(cfg, &out),
        Command::Simulate => commands::simulate(cfg, &out),
        Command::Predict => commands::predict(cfg, &out),
    }
}

fn fail(e: &CliError, output_dir: Option<&std::path::Path>) -> ExitCode {
    let report = e.report();
    let doc = serde_json::json!({ "error": report });
    if let Some(dir) = output_dir {
        if let Ok(text) = serde_json::to_string_pretty(&doc) {
            let _ = std::fs::write(dir.join("error.json"), text);
        }
    }
    eprintln!("{doc}");
    ExitCode::from(report.exit_code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e, None),
    };
    match run(&cli, &cfg) {
        Ok(path) => {
            println!("{}", serde_json::json!({ "command": cli.command.name(), "result": path }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&cfg.paths.output_dir)),
    }
}
