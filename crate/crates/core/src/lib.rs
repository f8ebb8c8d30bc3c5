pub mod baselines;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod spnum;
pub mod utilities;

pub use error::{Error, Result};
