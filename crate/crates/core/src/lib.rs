pub mod aggregation;
pub mod coefficient;
pub mod diffusion;
pub mod error;
pub mod generation;
pub mod graph;
pub mod linalg;
pub mod models;
pub mod rational;
pub mod scenario;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
