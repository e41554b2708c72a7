//! Interpretable probabilistic password strength meter.
//!
//! Passwords are scored by the product of per-character local conditionals
//! `Q(x_i | x_{-i})`, which also powers per-character feedback, secure
//! substitution suggestions and strength-increasing perturbations.

// `!(x > 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod meter;
pub mod neural;
pub mod ngram;
pub mod numerics;

pub use error::{Error, Result};
pub use estimator::{CharDistribution, Estimator};
pub use meter::{PerturbationMode, StrengthReport};
