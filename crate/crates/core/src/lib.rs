pub mod data;
pub mod error;
pub mod experiments;
pub mod lifelong;
pub mod model;
pub mod network;
pub mod original;
pub mod retrieval;
pub mod similarity;
pub mod synth;

pub use error::{Error, Result};
