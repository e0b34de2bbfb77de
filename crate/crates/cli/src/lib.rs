//! Experiment orchestration for `hdgauss`: configuration parsing, the six
//! experiment kinds, and CSV/JSON/SVG result files.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod svg;

pub use config::{parse_config, ExperimentConfig, ExperimentKind, GridPoint, RawConfig};
pub use error::{CliError, Result};
pub use output::{config_hash, Manifest, Table};
pub use runner::{execute, run_to_dir, Outcome};
