pub mod dataset;
pub mod error;
pub mod impute;
pub mod linalg;
pub mod stats;
pub mod forward;
pub mod ulda;
pub mod tree;
pub mod baseline;
pub mod bench;
pub mod cli;
mod serde_f64;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
