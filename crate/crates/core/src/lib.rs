//! Budget-elastic data mining.
//!
//! A hierarchical coder (dual R-trees, an R-tree over SVD user vectors, or a
//! divisive k-means hierarchy) turns a training set into a family of codes of
//! increasing length. Mining components (kNN classification and neighbourhood
//! collaborative filtering) consume one code at a time and can resume from the
//! state of a previous, shallower result. The elasticity calculus and the
//! budget planner relate result quality to time and money.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod bench;
pub mod cf;
pub mod coding;
pub mod dataset;
pub mod elasticity;
pub mod error;
#[cfg(test)]
mod fixtures;
pub mod knn;
pub mod planner;
pub mod synth;

pub use error::{Error, Result};
