//! Configuration, orchestration and reporting for the `rarefail` binary.

pub mod config;
pub mod report;
pub mod run;

pub use config::{Driver, ModelDecl, RunConfig};
pub use run::{execute, write_outputs, EstimateFile, Outcome};
