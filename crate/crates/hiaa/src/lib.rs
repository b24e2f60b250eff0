//! File formats, run configuration and the command-line pipeline around
//! `hiaa-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use error::{CliError, Result};
