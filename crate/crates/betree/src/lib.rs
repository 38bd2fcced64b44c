//! File formats, parallel evaluation and the command-line driver for
//! differentiable boundary trees.
//!
//! The numerical work lives in [`betree_core`]; this crate reads and writes
//! datasets (IDX and embedding CSV), parameter checkpoints, tree snapshots and
//! Graphviz renderings, and wires them into the `betree` binary.

pub mod checkpoint;
pub mod cli;
pub mod dot;
pub mod embedding_csv;
mod error;
pub mod idx;
pub mod model;
pub mod parallel;
pub mod snapshot;
pub mod trainlog;

pub use error::{IoError, Result};
