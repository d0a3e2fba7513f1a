//! Command-line front end for `nnsysid`: file formats, the Chen benchmark
//! experiments and model persistence.

pub mod error;
pub mod experiment;
pub mod formats;

pub use error::{CliError, Result};
