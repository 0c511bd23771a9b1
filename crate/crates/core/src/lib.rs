pub mod approximator;
pub mod artifacts;
pub mod cli;
pub mod disagreement;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod identifiability;
pub mod oracle;
pub mod process;
pub mod rng;
pub mod simulators;
pub mod stats;

pub use error::{Error, Result};
