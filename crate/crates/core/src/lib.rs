//! Expert-informed deconfounding for text-outcome classification.
//!
//! The crate covers the full workflow:
//!
//! * [`corpus`]: ingest, preprocess, split and synthesize labeled document corpora;
//! * [`stats`]: token/label co-occurrence statistics (PMI, LMI, effective LMI, z-scores);
//! * [`treeminer`]: iterated depth-limited decision trees that surface candidate
//!   distractor tokens, plus the file-based expert review round trip;
//! * [`diffcore`]: a small reverse-mode differentiation engine with a
//!   gradient-reversal node, Adam and finite-difference gradient checks;
//! * [`model`]: the hierarchical attention classifier with adversarial
//!   discriminators behind gradient reversal, and its training loop;
//! * [`attribution`]: integrated gradients, paragraph aggregation and
//!   precision@Oracle alignment scoring;
//! * [`evalmetrics`]: F1 variants and the paired t-test.
//!
//! Independent units of work are dispatched through [`exec`], which uses rayon
//! when the `parallel` feature is enabled and falls back to plain iteration
//! otherwise.

pub mod attribution;
pub mod corpus;
pub mod diffcore;
pub mod evalmetrics;
pub mod exec;
pub mod hashing;
pub mod model;
pub mod stats;
pub mod task;
pub mod treeminer;

mod error;

pub use error::{Error, Result};
