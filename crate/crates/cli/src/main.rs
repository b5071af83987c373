use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use podgpr_cli::study::{self, ModelChoice};
use podgpr_cli::{Result, StudyConfig};
use podgpr_core::rom::RomVariant;

#[derive(Parser)]
#[command(name = "podgpr", version, about = "POD-GPR reduced order modelling and UQ study pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Study configuration (JSON); defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the parameter space and run the full-order solver.
    Snapshots,
    /// Build the reduced basis from the training snapshots.
    Pod,
    /// Train a ROM variant.
    Train {
        #[arg(long)]
        variant: Option<RomVariant>,
    },
    /// Test-set errors and timing of a trained ROM.
    Evaluate {
        #[arg(long)]
        variant: Option<RomVariant>,
    },
    /// Morris screening.
    Morris {
        /// fom, global or td; the configured ROM variant when absent.
        #[arg(long)]
        model: Option<ModelChoice>,
    },
    /// Sobol indices.
    Sobol {
        #[arg(long)]
        model: Option<ModelChoice>,
    },
    /// Bayesian calibration by Metropolis-Hastings.
    Mcmc {
        #[arg(long)]
        model: Option<ModelChoice>,
    },
    /// Run snapshots, pod, train and evaluate for the configured variant.
    Build,
    /// Collect all stage summaries.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => StudyConfig::from_file(path)?,
        None => StudyConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.common.out {
        cfg.out_dir = out;
    }
    cfg.validate()?;
    let default_model = ModelChoice::from_variant(cfg.variant);
    match cli.command {
        Command::Snapshots => {
            let m = study::run_snapshots(&cfg)?;
            println!("snapshots: {}", m.details["successes"].as_array().map_or(0, Vec::len));
        }
        Command::Pod => {
            let m = study::run_pod(&cfg)?;
            println!("pod: n = {}", m.details["n"]);
        }
        Command::Train { variant } => {
            let m = study::run_train(&cfg, variant.unwrap_or(cfg.variant))?;
            println!("train: {} GPs", m.details["n_gps"]);
        }
        Command::Evaluate { variant } => {
            let (m, t) = study::run_evaluate(&cfg, variant.unwrap_or(cfg.variant))?;
            println!("evaluate: mean tRE {} (projection {}), speed-up {:.1}", m.details["mean_tre"], m.details["projection_mean_tre"], t.speedup);
        }
        Command::Morris { model } => {
            let m = study::run_morris(&cfg, model.unwrap_or(default_model))?;
            println!("morris: ranking {}", m.details["rankings"]);
        }
        Command::Sobol { model } => {
            study::run_sobol(&cfg, model.unwrap_or(default_model))?;
            println!("sobol: done");
        }
        Command::Mcmc { model } => {
            let m = study::run_mcmc(&cfg, model.unwrap_or(default_model))?;
            println!("mcmc: acceptance {}", m.details["acceptance_rate"]);
        }
        Command::Build => {
            study::run_snapshots(&cfg)?;
            study::run_pod(&cfg)?;
            study::run_train(&cfg, cfg.variant)?;
            let (m, _) = study::run_evaluate(&cfg, cfg.variant)?;
            println!("build: mean tRE {}", m.details["mean_tre"]);
        }
        Command::Report => {
            study::run_report(&cfg)?;
            println!("report: {}", cfg.out_dir.join("report.md").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
