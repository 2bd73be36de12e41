//! Variance-reduced stochastic modified forward-backward splitting for
//! monotone stochastic generalized equations `0 ∈ E[A(x, ω)] + B(x)`.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod rng;
pub mod schedules;
pub mod solvers;

pub use error::{Error, Result};
