//! Wideband channel estimation for large arrays whose beams drift with frequency.
//!
//! The estimator models the frequency-dependent direction as a per-antenna phase
//! perturbation of a shared angular dictionary and fits it with sparse Bayesian
//! learning, one subcarrier at a time. Baselines, Cramér-Rao bounds and a seeded
//! sweep harness live alongside it.

// Negated comparisons below are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod baselines;
pub mod channel;
pub mod crb;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod refine;
pub mod sbce;

pub use error::{Error, Result};
