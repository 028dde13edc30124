//! Command-line runner for the dphd pipeline.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Config, ModeChoice, SplitName, OUT_DIR_ENV};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "dphd",
    version,
    about = "Differentially private hyperdimensional classification"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    #[command(flatten)]
    overrides: Overrides,

    /// Print the effective configuration (defaults, file, flags) and exit.
    #[arg(long, global = true)]
    dump_config: bool,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    sigma_b: Option<f64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    #[arg(long, global = true)]
    passes: Option<u32>,
    #[arg(long, global = true)]
    noise_seed: Option<u64>,
    #[arg(long, global = true)]
    fraction: Option<f64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, global = true, value_enum)]
    calibration_split: Option<SplitArg>,
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Low,
    High,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    GenData,
    /// Grid-search the basis spread against the privacy budget.
    Tune,
    /// Train (and optionally privatize) a model.
    Train {
        /// Privatize the trained model; requires --epsilon.
        #[arg(long)]
        private: bool,
    },
    /// Evaluate a saved model on the test split.
    Eval {
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Predicted and simulated signal-to-noise ratios.
    Snr,
    /// Reconstruct features from released hypervectors.
    Attack {
        /// Model whose basis decodes `--hypervectors`.
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
        /// CSV of hypervectors to decode (header h0..h{D-1}).
        #[arg(long, value_name = "PATH", requires = "model")]
        hypervectors: Option<PathBuf>,
    },
    /// Accuracy and attacker error when dropping query dimensions.
    DropDims,
    /// Inference latency across hypervector sizes.
    Bench,
}

fn effective_config(o: &Overrides) -> Result<Config, CliError> {
    let mut c = match &o.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            c.run.out_dir = PathBuf::from(dir);
        }
    }
    if let Some(v) = &o.out_dir {
        c.run.out_dir = v.clone();
    }
    if let Some(v) = o.seed {
        c.run.seed = v;
    }
    if let Some(v) = o.epsilon {
        c.privacy.epsilon = Some(v);
        c.privacy.enabled = true;
        c.snr.epsilon_grid = vec![v];
    }
    if let Some(v) = o.delta {
        c.privacy.delta = v;
    }
    if let Some(v) = o.passes {
        c.privacy.passes = v;
    }
    if let Some(v) = o.noise_seed {
        c.privacy.noise_seed = v;
    }
    if let Some(v) = o.sigma_b {
        c.encoder.sigma_b = v;
    }
    if let Some(v) = o.dim {
        c.encoder.dim = v;
        c.tune.dim = v;
    }
    if let Some(v) = o.fraction {
        c.drop_dims.fractions = if v == 0.0 { vec![0.0] } else { vec![0.0, v] };
    }
    if let Some(v) = o.mode {
        c.drop_dims.mode = match v {
            ModeArg::Low => ModeChoice::Low,
            ModeArg::High => ModeChoice::High,
            ModeArg::Both => ModeChoice::Both,
        };
    }
    if let Some(v) = o.calibration_split {
        c.drop_dims.calibration_split = match v {
            SplitArg::Train => SplitName::Train,
            SplitArg::Val => SplitName::Val,
            SplitArg::Test => SplitName::Test,
        };
    }
    Ok(c)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = effective_config(&cli.overrides)?;
    if cli.dump_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Config("no command given; see --help".into()));
    };
    match command {
        Command::GenData => commands::gen_data(&config),
        Command::Tune => commands::tune(&config),
        Command::Train { private } => {
            if private {
                config.privacy.enabled = true;
            }
            commands::train(&config)
        }
        Command::Eval { model } => commands::eval(&config, model),
        Command::Snr => commands::snr(&config),
        Command::Attack { model, hypervectors } => commands::attack(&config, model, hypervectors),
        Command::DropDims => commands::drop_dims(&config),
        Command::Bench => commands::bench(&config),
    }
}

/// Parses the process arguments, runs the command and reports errors as one
/// JSON line on stderr.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
