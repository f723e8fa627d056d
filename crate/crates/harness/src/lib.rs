//! Experiment harness for the quadratic enhancer: gradient checks, oracle
//! equivalence, tail-probability estimates, cost tables, training and the
//! shift ablation, all driven by JSON configs.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

pub use error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Gradcheck,
    OracleEquiv,
    Montecarlo,
    Cost,
    Train,
    AblateK,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

macro_rules! with_overrides {
    ($ty:ty, $path:expr, $o:expr) => {{
        let mut cfg: $ty = load($path)?;
        if let Some(seed) = $o.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &$o.out {
            cfg.out = Some(out.clone());
        }
        cfg
    }};
}

fn load<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    config::load(path)
}

/// Runs one subcommand; `Ok(true)` means every check passed.
pub fn run(
    command: Command,
    config: Option<&Path>,
    overrides: &Overrides,
    out: &mut dyn Write,
) -> Result<bool> {
    match command {
        Command::Gradcheck => commands::gradcheck::run(
            &with_overrides!(config::GradcheckConfig, config, overrides),
            out,
        ),
        Command::OracleEquiv => commands::oracle::run(
            &with_overrides!(config::OracleConfig, config, overrides),
            out,
        ),
        Command::Montecarlo => commands::montecarlo::run(
            &with_overrides!(config::MontecarloConfig, config, overrides),
            out,
        ),
        Command::Train => commands::train::run(
            &with_overrides!(config::TrainConfig, config, overrides),
            out,
        ),
        Command::AblateK => commands::ablate::run(
            &with_overrides!(config::AblateConfig, config, overrides),
            out,
        ),
        Command::Cost => {
            let mut cfg: config::CostConfig = load(config)?;
            if let Some(out) = &overrides.out {
                cfg.out = Some(out.clone());
            }
            commands::cost::run(&cfg, out)
        }
    }
}
