//! Experiment configuration, instance sampling, parallel execution and output files.

mod config;
mod instance;
mod output;
mod run;

pub use config::*;
pub use instance::*;
pub use output::*;
pub use run::*;
