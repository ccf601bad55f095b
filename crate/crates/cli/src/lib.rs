//! Pipeline stages, file formats, and the command-line front end for the
//! order-flow factor miner.
//!
//! Everything observable lives on disk: each stage reads its predecessors'
//! artifacts, stamps every output with the config hash, and refuses inputs
//! produced under a different configuration. Stages are idempotent and
//! bit-reproducible for a fixed seed.

pub mod files;
pub mod stages;

pub use microflow_core as core;
