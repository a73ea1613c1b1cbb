//! File formats, parallel chains and the command-line front end for
//! `dosefactor-core`.

pub mod cli;
pub mod config;
pub mod draws;
mod error;
pub mod io;
pub mod manifest;
pub mod output;
pub mod runner;

pub use error::{CliError, Result};
