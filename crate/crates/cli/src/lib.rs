//! Command-line front-end for the Karma routing experiments.
//!
//! The binary is a thin clap wrapper around [`commands`]; configuration and
//! the three built-in presets live in [`config`].

pub mod commands;
pub mod config;

pub use commands::{analyze_chain, design_prices, run, system_optimum, ChainReport, RunReport};
pub use config::{Preset, PriceDesign, PricingConfig, RunConfig};

use karma_core::KarmaError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or invalid configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Request refused before any computation.
    #[error("refused: {0}")]
    Refused(String),
    #[error(transparent)]
    Karma(KarmaError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 2 for configuration and refusal, 1 for failures during a computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Refused(_) => 2,
            CliError::Karma(KarmaError::InvalidParameter(_))
            | CliError::Karma(KarmaError::InfeasibleHorizon { .. })
            | CliError::Karma(KarmaError::NonCanonicalPrices { .. })
            | CliError::Karma(KarmaError::PeriodicChain) => 2,
            CliError::Karma(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
