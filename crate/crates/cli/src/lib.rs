//! Configuration-driven front end: cell solve, micro/macro ensembles and the
//! comparison experiments, each writing CSV outputs plus a manifest that is
//! itself a valid configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;

pub use config::RunConfig;
pub use error::CliError;
