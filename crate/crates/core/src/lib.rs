pub mod config;
pub mod error;
pub mod hsi_io;
pub mod metrics;
pub mod noise;
mod par;
pub mod patch;
pub mod solver;
pub mod subspace;
pub mod synthetic;
pub mod tensor;
pub mod wlrtr;

pub use error::{Error, Result};
