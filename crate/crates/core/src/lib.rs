pub mod autograd;
pub mod data;
pub mod encoder;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod fingerprint;
pub mod model;
pub mod pipeline;
pub mod safetensors;
pub mod synthetic;

pub use error::{Error, Result};
