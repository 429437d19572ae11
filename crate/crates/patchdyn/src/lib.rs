//! Command-line front end, JSON configs, CSV output and a rayon executor for
//! [`patchdyn_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod figure;
pub mod output;
pub mod parallel;

pub use config::{AnalysisOptions, ConfigDocument};
pub use error::CliError;
pub use parallel::Rayon;
