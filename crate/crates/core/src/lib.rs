//! Measurement engine for facial-impression bias in vision-language
//! embeddings.
//!
//! The pipeline reads image and prompt embeddings plus human rating tables,
//! scores every image against each attribute's two pole prompts, compares
//! those scores to human ratings, studies the correlation structure across
//! attributes, and probes generated images through ridge-learned rating
//! subspaces.

pub mod association;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod scale;
pub mod stats;
pub mod structure;
pub mod subspace;

pub use error::{Error, Result};
