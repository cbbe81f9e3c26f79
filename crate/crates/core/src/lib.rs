//! Core algorithms for building, analysing and reasoning over multimodal
//! knowledge graphs assembled from image-text corpora.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the
//! command line and anything touching the filesystem live in the `uknow`
//! crate.
//!
//! Pipeline overview:
//!
//! 1. [`corpus`] holds the normalized news and image-text pair records.
//! 2. [`features`] is the per-item feature contract (embeddings, detections,
//!    entities) plus a deterministic stub featurizer.
//! 3. [`symbolize`] numbers every fact, image, text, object and entity with a
//!    level-tagged global id and exposes the static edge-code registry.
//! 4. [`construct`] materializes the five knowledge views and assembles the
//!    immutable [`construct::Graph`].
//! 5. [`stats`] and [`split`] analyse and partition a graph.
//! 6. [`reasoning`] trains translation embeddings (optionally with the
//!    neighbour-aggregation plug-in) and evaluates filtered link prediction.
//! 7. [`scoring`] computes the knowledge embedding, the three-way similarity
//!    score, and retrieval / classification metrics.

#![no_std]

extern crate alloc;

pub mod construct;
pub mod corpus;
pub mod error;
pub mod features;
pub mod math;
pub mod reasoning;
pub mod rng;
pub mod scoring;
pub mod split;
pub mod stats;
pub mod symbolize;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
