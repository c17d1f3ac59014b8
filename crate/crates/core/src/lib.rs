//! Building blocks for probing how much a speech emotion recognition model
//! relies on linguistic versus acoustic information.

pub mod acoustics;
pub mod error;
pub mod lingfeats;
pub mod manifest;
pub mod par;
pub mod probe;
pub mod seed;
pub mod stats;
pub mod suitegen;
pub mod types;

pub use error::{Error, Result};
pub use types::{Dimension, EmotionTriple, ModelVariant, PredictionRecord, RunConfig, Split, Utterance};
