//! Token-based multitask transducer with dynamic task activation.
//!
//! A small neural transducer emits words interspersed with task tokens
//! (language id, speaker change, endpoint, entity tags). Learnable task
//! vectors added to the acoustic embeddings select which tasks the model
//! performs for a given utterance, so utterances annotated for different
//! task subsets can be trained together.

pub mod activation;
pub mod checkpoint;
pub mod codec;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
