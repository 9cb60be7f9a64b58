//! Dynamic topic-discourse memory networks for pairwise persuasiveness
//! prediction.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod experiment;
pub mod factor;
pub mod gradcheck;
pub mod manifest;
pub mod memory;
pub mod model;
pub mod params;
pub mod predictor;
pub mod rng;
pub mod synthetic;
pub mod tape;
pub mod trainer;

pub use config::{EncoderInput, ModelConfig, Variant};
pub use error::{Error, Result};
