//! Command-line front end: argument parsing and dispatch into
//! [`xva_collocate::config`]. Exit codes: 0 on success, 2 on input or
//! configuration problems, 3 on numerical failures.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use xva_collocate::config::{self, Experiment, RunConfig};
use xva_collocate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "xva-collocate",
    version,
    about = "Monte Carlo exposure engine with collocation-based sensitivities",
    subcommand_required = false,
    arg_required_else_help = true
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH", global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config's out_dir).
    #[arg(long, value_name = "DIR", global = true)]
    out: Option<PathBuf>,

    /// Gaussian-noise seed (overrides the config's seed).
    #[arg(long, value_name = "U64", global = true)]
    seed: Option<u64>,

    /// Cap the worker-thread count; results do not depend on it.
    #[arg(long, value_name = "K", global = true)]
    threads: Option<usize>,

    /// Also dump the simulated base-market paths (paths.csv).
    #[arg(long, global = true)]
    dump_paths: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap the discount curve and export it (curve.csv).
    Bootstrap,
    /// Expected exposure, exact vs collocation (ee.csv).
    Ee,
    /// Sensitivity estimators with error and bound diagnostics
    /// (sens.csv, sens_summary.csv, bound.csv).
    Sens,
    /// Bermudan-swaption exposure and sensitivities
    /// (bermudan_sens.csv, ee.csv or ee_approx.csv, cost.csv, nodes/).
    Bermudan,
    /// Independence-approximation and wrong-way-risk CVA (cva.csv).
    Cva,
    /// Integrated-error and cost tables plus exposure-error data
    /// (kappa.csv, cost.csv, ee.csv).
    Tables,
}

impl From<Command> for Experiment {
    fn from(command: Command) -> Experiment {
        match command {
            Command::Bootstrap => Experiment::Bootstrap,
            Command::Ee => Experiment::Ee,
            Command::Sens => Experiment::Sens,
            Command::Bermudan => Experiment::Bermudan,
            Command::Cva => Experiment::Cva,
            Command::Tables => Experiment::Tables,
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config <PATH> is required".into()))?;
    let mut config = RunConfig::load(&path)?;
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let experiment = match cli.command {
        Some(command) => command.into(),
        None => match &config.experiment {
            Some(name) => Experiment::from_str(name)?,
            None => {
                return Err(Error::Config(
                    "no subcommand given and the config sets no `experiment` key".into(),
                ))
            }
        },
    };
    config::run(&config, experiment, cli.dump_paths)
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
