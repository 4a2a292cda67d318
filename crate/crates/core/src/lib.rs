//! Event-driven simulation of asynchronous learning over Poisson data
//! streams, comparing a network-regularized scheme (every node keeps its own
//! model, pulled toward its neighbours) with a federated baseline (one shared
//! model updated by whichever node reports next), together with the
//! convergence constants and upper bounds for both.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod schemes;
pub mod streams;

pub use error::{Error, Result};
