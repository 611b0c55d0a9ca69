//! `bdy`: simulate, integrate and analyse the three-classes dollar-exchange model.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Errors surfaced to the shell. Validation errors exit with 1, the rest with 2.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl From<bdy_core::Error> for CliError {
    fn from(e: bdy_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bdy",
    version,
    about = "Three-classes BDY wealth-exchange toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model parameters shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Wealth floor: agents at or below it cannot give [default: 5]
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<i64>,
    /// Mean wealth per agent [default: 7]
    #[arg(long, allow_negative_numbers = true)]
    pub mu: Option<i64>,
    /// Wealth cap, an integer or `inf` [default: 10]
    #[arg(long)]
    pub b: Option<String>,
    /// Truncation of the state vector [default: b + 2, or a fallback when b is `inf`]
    #[arg(long, allow_negative_numbers = true)]
    pub n_max: Option<i64>,
    /// TOML file with flat keys; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact continuous-time simulation of N agents
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of agents [default: 1000]
        #[arg(long, allow_negative_numbers = true)]
        n_agents: Option<i64>,
        /// Final time [default: 1]
        #[arg(long)]
        t_end: Option<f64>,
        /// RNG seed [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated snapshot times [default: 0 and t-end]
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<f64>>,
        /// Initial wealth: `mean` or `csv:<path>` with an `n,p_n` sampling law
        #[arg(long, default_value = "mean")]
        init: String,
        /// Output table `time,n,count`
        #[arg(long)]
        out: PathBuf,
        /// Optional table `time,giver,receiver` of every transfer
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// RK4 integration of the mean-field system
    Meanfield {
        #[command(flatten)]
        model: ModelArgs,
        /// Final time [default: 5]
        #[arg(long)]
        t_end: Option<f64>,
        /// Step size [default: 0.01]
        #[arg(long)]
        dt: Option<f64>,
        /// Initial datum: `delta` (all mass at mu) or `csv:<path>` with `n,p_n`
        #[arg(long, default_value = "delta")]
        init: String,
        /// Comma-separated output times [default: 0 and t-end]
        #[arg(long, value_delimiter = ',')]
        samples: Option<Vec<f64>>,
        /// Output table `time,n,p_n`
        #[arg(long)]
        out: PathBuf,
    },
    /// Equilibrium distribution and its summary
    Equilibrium {
        #[command(flatten)]
        model: ModelArgs,
        /// Output table `n,p_n`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Entropies, Gini index, rates and distance to equilibrium of stored states
    Diagnose {
        #[command(flatten)]
        model: ModelArgs,
        /// Input table `time,n,p_n`
        #[arg(long = "in")]
        input: PathBuf,
        /// Output metrics table
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the numerical studies
    Experiment {
        #[arg(value_enum)]
        study: Study,
        /// TOML file with the study settings
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `seed` from the config
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    Convergence,
    Poc,
    GiniSweep,
    GeneratorOracle,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("BDY_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Validation(format!(
                "invalid value for `BDY_THREADS`: expected a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    configure_threads()?;
    match command {
        Command::Simulate {
            model,
            n_agents,
            t_end,
            seed,
            samples,
            init,
            out,
            event_log,
        } => commands::simulate(
            &model,
            n_agents,
            t_end,
            seed,
            samples,
            &init,
            &out,
            event_log.as_deref(),
        ),
        Command::Meanfield {
            model,
            t_end,
            dt,
            init,
            samples,
            out,
        } => commands::meanfield(&model, t_end, dt, &init, samples, &out),
        Command::Equilibrium { model, out } => commands::equilibrium(&model, out.as_deref()),
        Command::Diagnose { model, input, out } => commands::diagnose(&model, &input, &out),
        Command::Experiment {
            study,
            config,
            seed,
            out,
        } => commands::experiment(study, config.as_deref(), seed, &out),
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            2
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(parse_and_dispatch(std::env::args_os()))
}
