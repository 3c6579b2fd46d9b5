//! Entity typing for knowledge bases.
//!
//! The pipeline: ingest N-Triples dumps into a [`kb::KnowledgeBase`], build
//! per-entity input vectors from short descriptions and entity links
//! ([`features`]), train a feedforward type classifier ([`nn`]), and score
//! predictions with hierarchy-aware NDCG@1 ([`eval`]) against the SDType and
//! BM25 baselines ([`baselines`]).
//!
//! The `neutype` binary wires these together; see [`cli`].

pub mod baselines;
pub mod cli;
pub mod embeddings;
mod error;
pub mod eval;
pub mod features;
pub mod kb;
pub mod nn;
pub mod sampling;
pub mod synth;
pub mod wire;

pub use error::{Error, Result};
