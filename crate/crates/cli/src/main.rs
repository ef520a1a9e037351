//! `spdtvax`: ingest traces, generate synthetic networks, rank nodes and run
//! vaccination experiments from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spdt_vax::config::Config;
use spdt_vax::strategy::Strategy;

/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
        }
    }
}

impl From<spdt_vax::Error> for CliError {
    fn from(e: spdt_vax::Error) -> Self {
        use spdt_vax::Error as E;
        match e {
            E::Config(_) | E::Domain(_) => CliError::Config(e.to_string()),
            E::Numeric(_) => CliError::Numeric(e.to_string()),
            E::Parse { .. } | E::Data(_) | E::Io { .. } | E::Json(_) => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "spdtvax", version, about)]
pub struct Cli {
    /// TOML configuration file; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the configuration file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn location updates (`user_id,lat,lon,unix_seconds`, plain or
    /// gzip) into a contact network.
    Ingest {
        traces: PathBuf,
        /// Network file name inside the output directory; `.bin` selects
        /// the binary format.
        #[arg(long, default_value = "network.txt")]
        output: String,
        /// Fail when more than this fraction of records is rejected.
        #[arg(long, default_value_t = 0.05)]
        max_rejected_fraction: f64,
        /// Densify to this many days after extraction.
        #[arg(long)]
        densify_days: Option<u32>,
    },
    /// Generate a synthetic network from the `[gdt]` parameters.
    Generate {
        #[arg(long, default_value = "network.bin")]
        output: String,
        #[arg(long)]
        nodes: Option<u32>,
        #[arg(long)]
        days: Option<u32>,
    },
    /// Score nodes with one strategy over the ranking window.
    Rank {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value = "DV")]
        strategy: Strategy,
        /// Information availability F: the observed share of nodes.
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
    },
    /// One replicate of the configured experiment.
    Simulate {
        #[arg(long)]
        network: Option<PathBuf>,
        /// Vaccination strategy; no vaccination when unset.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Vaccination rate, percent of all nodes.
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        replicate: u32,
    },
    /// Run the configured experiment sweep. Completed replicates found in
    /// the output directory's journal are reused.
    Sweep {
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Summarise sweep CSV files.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Reduction, in percent, at which vaccination cost is compared.
        #[arg(long, default_value_t = 90.0)]
        target: f64,
    },
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<Config>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let config = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Data(format!("{}: {e}", cli.out.display())))?;
    commands::dispatch(cli, &config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spdtvax: {e}");
            ExitCode::from(e.code())
        }
    }
}
