//! Differentiable boundary trees.
//!
//! A boundary tree stores a subset of training samples; queries descend greedily
//! toward the closest of the current node and its children, and a misclassified
//! training query is stored as a new child of the node where it stopped. Relaxing
//! each descent step into a softmax over negative distances makes the tree's class
//! prediction differentiable with respect to an embedding network applied to every
//! sample, so the embedding can be trained end to end for nearest-neighbour use.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical core:
//!
//! - [`diff`]: a small reverse-mode autodiff tape over dense vectors and matrices.
//! - [`transform`]: the MLP embedding network and the Adam optimizer.
//! - [`tree`]: the online boundary tree with hard greedy traversal.
//! - [`soft_path`]: the softmax-relaxed traversal and its cross-entropy loss.
//! - [`trainer`]: alternating tree rebuilds and gradient phases, plus evaluation.
//! - [`data`]: datasets, the half-moons generator and seeded splitting.
//!
//! File formats, parallel evaluation and the command-line tool live in the
//! `betree` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod diff;
mod error;
pub mod soft_path;
pub mod trainer;
pub mod transform;
pub mod tree;

pub use error::{Error, Result};
