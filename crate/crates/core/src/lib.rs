//! Cross-domain recommendation with user transformation and
//! similarity-preserving contrastive regularization.
//!
//! A TARGET phase trains a single-domain backbone and freezes its user
//! embeddings as a similarity oracle. A TRANSFER phase then trains on both
//! domains, routing target users through a learned affine map and keeping
//! their transformed similarities close to the oracle's.

pub mod backbone;
pub mod cli;
pub mod corpus;
pub mod cut;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod similarity;
pub mod synthgen;

pub use error::{Error, Result};
