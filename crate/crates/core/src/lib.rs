//! Simulation and numerical verification for the vertex-reinforced jump
//! process, the edge-reinforced random walk and the random Schrödinger
//! operator `H_beta = 2 beta - P` that governs both.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod beta;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod processes;
pub mod schrodinger;
pub mod verify;

pub use error::{Error, Result};
