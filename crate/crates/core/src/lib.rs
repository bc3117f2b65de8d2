//! Contrastive pre-training of a time-series transformer encoder, the
//! contrastive-accuracy measure of embedding quality, downstream probing,
//! and the experiment harness that relates the two.

pub mod augment;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod evaluate;
mod exec;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod training;

pub use error::{CheckpointError, Error, Result};
