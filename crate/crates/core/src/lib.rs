//! Space-time least-squares recovery of parabolic states from partial observations.

pub mod assembly;
pub mod cli;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod infsup;
pub mod linalg;
pub mod precond;
pub mod solver;

pub use error::{Error, Result};
