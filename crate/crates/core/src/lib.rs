pub mod cli;
pub mod detectors;
pub mod error;
pub mod evalharness;
pub mod format;
pub mod gradembed;
pub mod linalg;
pub mod micronet;
pub mod par;
pub mod subspace;

pub use error::{Error, Result};
