//! Next point-of-interest prediction engine.
//!
//! The crate turns raw movement data into semantically enriched check-in
//! sequences, learns long- and short-term user preferences with a
//! spatio-temporal self-attention model, and ranks candidate locations for
//! the next visit. It is organized as a pipeline:
//!
//! - [`trajectory`]: GPS streams to stay points and clustered locations
//! - [`dataset`]: sessionization, filtering, splits, interval matrices
//! - [`embedding`]: lookup tables and interval embeddings
//! - [`attention`]: self-attention aggregation, fusion, candidate matching
//! - [`model`]: the assembled forward pass and analytic backward pass
//! - [`training`]: negative-sampled cross-entropy training with Adam
//! - [`evaluation`]: Recall@K / NDCG@K, the visit-frequency baseline, and
//!   the input-length experiment harness
//! - [`pipeline`]: end-to-end preprocessing entry points
//!
//! Everything is deterministic given a base seed: parameter init, shuffling,
//! negative sampling and dropout all derive from it (see [`training`]).

pub mod attention;
pub mod checkpoint;
pub mod dataset;
pub mod dbscan;
pub mod embedding;
mod error;
pub mod evaluation;
pub mod fixtures;
pub mod geo;
pub mod model;
pub mod pipeline;
pub mod training;
pub mod trajectory;

pub use error::{Error, Result};
