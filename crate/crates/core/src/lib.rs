pub mod compas;
pub mod data;
pub mod discretize;
pub mod error;
pub mod expectation;
pub mod glm;
pub mod inference;
pub mod pipeline;
pub mod rng;
pub mod scan;
pub mod score;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
