//! Experiment runner around `tbd-core`: configuration files, measurement and CSV
//! formats, and the simulate / track / evaluate / sweep commands.

pub mod config;
pub mod error;
pub mod io;
pub mod runner;

pub use config::{Axis, RunConfig};
pub use error::{CliError, Result};
