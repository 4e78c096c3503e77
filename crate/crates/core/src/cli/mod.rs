//! Configuration-driven front end. [`run`] is the whole binary; it returns
//! the process exit code.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{ablation_rows, estimate, report_rows, AblationRow, ReferenceChoice, ReportRow};
pub use config::{AblationConfig, Overrides, RunConfig, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Failures split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        use crate::Error as E;
        match e {
            E::InvalidArgument { .. } | E::DimensionMismatch { .. } | E::Problem(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rare-sampler", version, about = "Rare-event probability estimation with learned dangerous sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config, default `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker cap; 1 runs everything on the calling thread.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "target-re")]
    pub target_re: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one estimator and write run.json, trace.csv and friends.
    Estimate(Common),
    /// Compare Deep IS with crude Monte Carlo across rarity levels.
    Ablation(Common),
    /// Tabulate conservativeness and acceleration of completed runs.
    Report {
        /// Run directories containing run.json.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Reference probability.
        #[arg(long = "reference-mu")]
        reference_mu: Option<f64>,
        /// Run directory whose estimate is the reference.
        #[arg(long = "reference-run")]
        reference_run: Option<PathBuf>,
    },
    /// Train the surrogate classifier on stage-1 draws.
    Train(Common),
    /// Extract the dominating set of a trained or given network.
    Domset {
        #[command(flatten)]
        common: Common,
        /// Existing net.json; trains a fresh one when absent.
        #[arg(long)]
        net: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        kappa: f64,
    },
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("RARE_SAMPLER_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        seed: common.seed,
        threads: common.threads,
        target_re: common.target_re,
        out: common.out.clone(),
    });
    cfg.validate()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Estimate(c) => {
            let (cfg, out) = load(&c)?;
            let run = commands::estimate(&cfg, &out)?;
            println!("{} estimate {:e} re {}", run.method, run.estimate, run.re.map_or("n/a".into(), |r| format!("{r:.4}")));
        }
        Command::Ablation(c) => {
            let (cfg, out) = load(&c)?;
            let rows = commands::ablation(&cfg, &out)?;
            print!("{}", commands::ablation_csv(&rows));
        }
        Command::Report {
            runs,
            out,
            reference_mu,
            reference_run,
        } => {
            let rows = commands::report(
                &runs,
                &ReferenceChoice {
                    mu: reference_mu,
                    run: reference_run,
                },
                &out,
            )?;
            print!("{}", commands::report_csv(&rows));
        }
        Command::Train(c) => {
            let (cfg, out) = load(&c)?;
            commands::train(&cfg, &out)?;
        }
        Command::Domset { common, net, kappa } => {
            let (cfg, out) = load(&common)?;
            let ds = commands::domset(&cfg, net.as_deref(), kappa, &out)?;
            println!("{} dominating points ({:?})", ds.len(), ds.status);
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
