pub mod cli;
pub mod datastore;
pub mod error;
pub mod influence;
pub mod projector;
pub mod quantizer;
pub mod rng;
pub mod selector;
pub mod synth;

pub use error::{Error, Result};
