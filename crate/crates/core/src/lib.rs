//! Inductive spatio-temporal kriging.
//!
//! Training graphs are grown with virtual nodes so that they resemble the
//! denser inference graph; a graph network with self-loop-free
//! spatio-temporal convolution, reference-based feature fusion and a
//! cycle-consistency pass estimates readings at nodes without sensors.

// `!(x > 0.0)` is used on purpose: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Splits are lists of ranges; a one-range list is the common case.
#![allow(clippy::single_range_in_vec_init)]

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{KitsError, Result};
