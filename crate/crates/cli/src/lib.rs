//! Command-line layer: argument definitions, output formats and the
//! implementations behind the `gbcd` binary's subcommands. Everything here
//! is a thin orchestration over the solver library so commands stay
//! testable without spawning processes.

pub mod args;
pub mod bench;
pub mod commands;
pub mod correlate;
pub mod error;
pub mod manifest;
pub mod model_io;
pub mod tables;

pub use error::{CliError, CliResult};
