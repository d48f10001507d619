//! Command-line driver: config files, subcommands and run manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fmt;
use std::fs;
use std::io;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mindex::dynamics::Algorithm;
use mindex::experiments::PRESET_IDS;
use mindex::exponents::{DEFAULT_DEGMAX, DEFAULT_KMAX, DEFAULT_TOL};
use mindex::targets::{ACTIVATION_IDS, LINK_IDS};

use crate::commands::Outcome;
use crate::config::{parse_config, ConfigError};
use crate::manifest::Plan;

pub const JOBS_ENV: &str = "MINDEX_JOBS";

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(mindex::Error),
    Io { path: PathBuf, source: io::Error },
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => e.fmt(f),
            CliError::Run(e) => e.fmt(f),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<mindex::Error> for CliError {
    fn from(e: mindex::Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    /// 2 for bad input, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Run(_) | CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mindex", version, about = "Online two-step gradient dynamics on single- and multi-index targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Output directory
    #[arg(long, default_value = "out", global = true)]
    pub out: PathBuf,
    /// Parallel trajectories (falls back to MINDEX_JOBS, then the core count)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// Config file with `key = value` lines
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set d=256`; may repeat
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an ensemble of trajectories; writes trajectories.csv and summary.json
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Information and polynomial generative exponents of a link, as JSON
    Exponent {
        #[arg(long)]
        link: String,
        /// Direction in index space for multi-index links, e.g. `1,0`
        #[arg(long)]
        direction: Option<String>,
        #[arg(long, default_value_t = DEFAULT_KMAX)]
        kmax: usize,
        #[arg(long, default_value_t = DEFAULT_DEGMAX)]
        degmax: usize,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Quadrature nodes (default depends on the link)
        #[arg(long)]
        nodes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Hitting-time scaling over dimensions; writes sweep.json, hitting.csv and trajectories.csv
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated dimensions, at least three
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a figure preset; writes <ID>.csv and summary.json
    Figure {
        id: String,
        /// Multiplies d, the batch size and the ensemble size
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the plan recorded in a manifest again
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

/// Registry listing appended to `--help`.
pub fn registry_help() -> String {
    let algorithms: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
    format!(
        "Links:       {}\nActivations: {}\nAlgorithms:  {}\nPresets:     {}\nConfig keys: {}",
        LINK_IDS.join(", "),
        ACTIVATION_IDS.join(", "),
        algorithms.join(", "),
        PRESET_IDS.join(", "),
        config::KEYS.join(", ")
    )
}

/// `--jobs`, then `MINDEX_JOBS`, then the number of cores.
pub fn resolve_jobs(flag: Option<usize>, env: Option<&str>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(CliError::Usage("--jobs must be at least 1".into()))
        } else {
            Ok(n)
        };
    }
    if let Some(s) = env {
        return match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Usage(format!("{JOBS_ENV} must be a positive integer, got `{s}`"))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_config(args: &ConfigArgs) -> Result<mindex::experiments::ExperimentConfig, CliError> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| commands::io_error(p, e))?,
        None => String::new(),
    };
    Ok(parse_config(&text, &args.overrides)?.config)
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let env_jobs = std::env::var(JOBS_ENV).ok();
    let (plan, common) = match cli.command {
        Command::Simulate { config, common } => (Plan::Simulate { config: load_config(&config)? }, common),
        Command::Sweep { config, dims, common } => (
            Plan::Sweep {
                config: load_config(&config)?,
                dims,
            },
            common,
        ),
        Command::Figure { id, scale, common } => (commands::figure_plan(&id, scale)?, common),
        Command::Exponent {
            link,
            direction,
            kmax,
            degmax,
            tol,
            nodes,
            common,
        } => {
            let direction = direction.as_deref().map(commands::parse_direction).transpose()?;
            let nodes = match nodes {
                Some(n) => n,
                None => commands::nodes_for(&link)?,
            };
            (
                Plan::Exponent {
                    link,
                    direction,
                    kmax,
                    degmax,
                    tol,
                    nodes,
                },
                common,
            )
        }
        Command::Replay { manifest, common } => {
            let jobs = resolve_jobs(common.jobs, env_jobs.as_deref())?;
            return commands::replay(&manifest, &common.out, jobs);
        }
    };
    let jobs = resolve_jobs(common.jobs, env_jobs.as_deref())?;
    commands::execute(&plan, &common.out, jobs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_every_registry_id() {
        let help = registry_help();
        for id in LINK_IDS.iter().chain(ACTIVATION_IDS).chain(PRESET_IDS) {
            assert!(help.contains(id), "{id} missing from help");
        }
        assert!(help.contains("lookahead2"));
    }

    #[test]
    fn jobs_resolution_order() {
        assert_eq!(resolve_jobs(Some(3), Some("5")).unwrap(), 3);
        assert_eq!(resolve_jobs(None, Some("5")).unwrap(), 5);
        assert!(resolve_jobs(None, None).unwrap() >= 1);
        assert!(resolve_jobs(Some(0), None).is_err());
        assert!(resolve_jobs(None, Some("many")).is_err());
    }

    #[test]
    fn figure_scale_reduces_dimension() {
        let Plan::Figure { runs, .. } = commands::figure_plan("fig2b", 0.25).unwrap() else {
            panic!("not a figure plan");
        };
        assert!(runs.iter().all(|r| r.d == 512));
        assert!(runs.iter().all(|r| r.seeds == 10));
    }

    #[test]
    fn he4_exponents() {
        let nodes = commands::nodes_for("He4").unwrap();
        let r = commands::exponent("He4", None, DEFAULT_KMAX, DEFAULT_DEGMAX, DEFAULT_TOL, nodes).unwrap();
        assert_eq!((r.ell, r.ell_star_p), (Some(4), Some(2)));
        assert!(commands::exponent("x1x2", None, 8, 6, 1e-7, 40).is_err());
    }
}
