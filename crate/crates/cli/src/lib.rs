//! Command-line workflows: corpus validation, group mining, rule
//! evaluation tables, verification, synthetic data and rule search.

pub mod cli;
pub mod commands;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod rulespec;

pub use cli::{run, Cli};
pub use error::CliError;
