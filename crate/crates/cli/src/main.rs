use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nhsim::config::{ExperimentConfig, Format};
use nhsim::error::{ChannelError, DilationError, Error};
use nhsim::output::{bounds_document, emit, qpd_document, reference_rows, rows_from_run, write_csv};
use nhsim::runner::{resolve_workers, run_experiment};

#[derive(Parser)]
#[command(name = "nhsim", version, about = "Monte Carlo simulation of non-Hermitian spin-chain dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trajectory simulation and write estimates.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override run.master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: config, then NHSIM_WORKERS, then all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output file (default: output.path, else CSV on stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write exact reference curves on the configured time grid.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print every closed-form error bound as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the quasi-probability decomposition as JSON.
    Qpd {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Failures that come from the input document rather than the computation.
fn is_config_error(e: &Error) -> bool {
    match e {
        Error::ConfigInvalid(_) | Error::Model(_) => true,
        Error::Dilation(d) => matches!(d, DilationError::NonPositiveGamma { .. } | DilationError::GammaCount { .. }),
        Error::Channel(c) => matches!(
            c,
            ChannelError::UnknownScheme(_) | ChannelError::SnapshotOffGrid { .. } | ChannelError::InvalidConfig(_)
        ),
        _ => false,
    }
}

enum Outcome {
    Done,
    AllZeroDenominator,
}

fn output_format(cfg: &ExperimentConfig) -> Format {
    cfg.output.as_ref().map(|o| o.format).unwrap_or_default()
}

fn execute(cli: Cli) -> Result<Outcome, Error> {
    match cli.command {
        Command::Run { config, seed, workers, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            let workers = resolve_workers(workers, cfg.run.workers);
            let result = run_experiment(&cfg, workers)?;
            let rows = rows_from_run(&result);
            match out.or_else(|| cfg.output.as_ref().and_then(|o| o.path.clone())) {
                Some(path) => emit(&rows, &result.manifest, &path, output_format(&cfg))?,
                None => write_csv(&rows, std::io::stdout().lock())?,
            }
            eprintln!(
                "{} trajectories, kappa = {:.6}, Lambda(T) = {:.6e}, {:.2} s on {} workers",
                result.manifest.n_traj,
                result.manifest.kappa,
                result.manifest.lambda_t,
                result.manifest.wall_time_s,
                workers
            );
            if result.result.all_zero_denominator() {
                return Ok(Outcome::AllZeroDenominator);
            }
        }
        Command::Reference { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = reference_rows(&cfg)?;
            emit(&rows, &cfg, &out, output_format(&cfg))?;
        }
        Command::Bounds { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&bounds_document(&cfg)?)?);
        }
        Command::Qpd { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}", serde_json::to_string_pretty(&qpd_document(&cfg)?)?);
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::AllZeroDenominator) => {
            eprintln!("error: the signed denominator vanished at every time point");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
