//! Scenario files, artifact formats and the `openqx` command line on top of
//! [`openqx_core`].

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod format;

use std::path::Path;

pub use commands::Outcome;
pub use config::Config;
pub use error::{CliError, ConfigError};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "OPENQX_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Spectrum,
    Greens,
    Evolve,
    Thermalize,
    Verify,
}

/// Loads the config, runs one subcommand and writes its artifacts into
/// `out` (or the directory named by the config).
pub fn run(command: Command, config: &Path, out: Option<&Path>) -> Result<Outcome, CliError> {
    let cfg = config::load(config)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    std::fs::create_dir_all(&dir)?;
    match command {
        Command::Spectrum => commands::spectrum_cmd(&cfg, &dir),
        Command::Greens => commands::greens_cmd(&cfg, &dir),
        Command::Evolve => commands::evolve_cmd(&cfg, &dir),
        Command::Thermalize => commands::thermalize_cmd(&cfg, &dir),
        Command::Verify => commands::verify_cmd(&cfg, &dir),
    }
}
