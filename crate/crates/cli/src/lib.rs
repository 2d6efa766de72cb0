//! Declarative experiment runner: TOML configs in, hashed CSV tables and a
//! pass/fail summary out.

pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod report;
pub mod studies;

pub use config::{ExperimentConfig, LoadedConfig, Study};
pub use error::{CliError, Result};
pub use report::{run, Report};
