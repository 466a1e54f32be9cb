//! Estimation, testing, operating characteristics and sample-size planning
//! for two-arm trials under the responder-stratified exponential survival
//! (RSES) model.
//!
//! Each group is described by a response probability `p` and two
//! exponential hazards, `λ₁` for responders and `λ₀` for non-responders,
//! so that the marginal survival function is
//! `S(t) = p e^{−λ₁ t} + (1 − p) e^{−λ₀ t}`.

pub mod cli;
pub mod design;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod logrank;
pub mod model;
pub mod numerics;
pub mod oc;
pub mod rng;

pub use error::{Error, Result};
