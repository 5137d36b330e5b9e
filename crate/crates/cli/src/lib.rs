//! File formats, configuration, fixtures and the parallel MCCV driver for
//! [`simforest_core`].

pub mod config;
pub mod error;
pub mod fixture;
pub mod io;
pub mod report;
pub mod runner;

pub use config::{load_config, FileConfig, LoadedConfig};
pub use error::{CliResult, CliStage, Failure};
pub use runner::{execute_make_fixture, execute_run, execute_validate, run_parallel, RunOptions};
