//! Exposure-fairness analysis for ranked retrieval.
//!
//! The crate turns TREC-style run files into per-document retrievability
//! scores, partitions the query set into topical groups with K-means, and
//! summarises how unevenly documents are exposed with Gini coefficients:
//! one over the whole query set, and one per topical group, aggregated by
//! minimum, mean and maximum.
//!
//! A small BM25 engine and a simulated-query generator are included so that
//! the whole pipeline can be exercised without an external search system.
//!
//! ```
//! use tretr_core::fairness::gini;
//!
//! assert_eq!(gini(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.25);
//! ```

pub mod cluster;
pub mod engine;
pub mod error;
pub mod fairness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod retrievability;

pub use error::{Error, Result};
