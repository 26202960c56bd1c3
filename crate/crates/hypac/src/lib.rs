//! Files, experiment plans and the command line for `hypac-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod io;
pub mod plan;
pub mod plot;

pub use error::{HarnessError, Result};
