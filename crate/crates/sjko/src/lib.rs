//! Command-line companion to `sjko-core`: configuration files, CSV and
//! checkpoint formats, the training/evaluation commands, the
//! Ornstein–Uhlenbeck benchmark and numerical self-checks.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod ou;
pub mod selfcheck;

pub use config::{Method, RunConfig, Task};
pub use error::{CliError, CliResult};
pub use sjko_core as core;
