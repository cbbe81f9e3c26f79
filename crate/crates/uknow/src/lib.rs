//! File formats, persistence and the command line for the uknow toolkit.
//!
//! The algorithms live in `uknow-core`; this crate reads corpora and
//! feature manifests, stores graphs, splits and models on disk, and
//! exposes everything through the `uknow` binary.

pub mod cli;
pub mod error;
pub mod ingest;
pub mod manifest;
pub mod run_manifest;
pub mod store;

pub use error::{Error, Result};
