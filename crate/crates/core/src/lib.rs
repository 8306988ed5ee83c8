pub mod analysis;
pub mod autograd;
pub mod checkpoint;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod models;
pub mod nn;
pub mod seed;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{Graph, NodeMasks};
