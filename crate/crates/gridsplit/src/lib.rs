//! File formats, worker pool, and command-line front end for the
//! transient-stability engine in `gridsplit-core`.

pub mod casefile;
pub mod cli;
pub mod error;
pub mod exec;
pub mod output;
pub mod scenario;

pub use error::{CliError, Result};
