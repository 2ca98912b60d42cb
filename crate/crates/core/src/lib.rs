pub mod cli;
pub mod config;
pub mod cpe;
pub mod dataset;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod propagation;
pub mod synth;
pub mod trainer;
pub mod validation;

pub use error::{GplError, Result};
