//! Safe trajectory optimization with tolerant discrete barrier states.
//!
//! The crate embeds barrier states into a discrete-time dynamics model and
//! optimizes the resulting safety-embedded system with an iLQR-style DDP
//! solver. Three safety treatments are provided:
//!
//! - tolerant barrier states (sigmoid + softplus barrier, finite everywhere),
//! - classical barrier states (inverse or log barrier, infinite at the boundary),
//! - an augmented-Lagrangian outer loop around the same unconstrained solver.
//!
//! Scenario builders cover a walled corridor for a unicycle, a quadrotor
//! tracking a figure-eight through an obstacle it starts inside, a four-robot
//! formation task, and randomized obstacle fields used by the benchmark
//! harness in [`bench`].

// Negated comparisons below deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod al;
pub mod barriers;
pub mod bench;
pub mod ddp;
mod error;
pub mod field;
pub mod models;
pub mod plot;
pub mod problem;
pub mod scenarios;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};
