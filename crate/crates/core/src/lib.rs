//! Adaptive minimum-contrast estimation and likelihood-ratio-type tests for
//! small-dispersion diffusions
//!
//! ```text
//! dX_t = b(X_t, alpha) dt + eps * sigma(X_t, beta) dW_t,   X_0 = x0,
//! ```
//!
//! observed at `t_k = kT/n`. All numerics are generic over [`Scalar`]
//! (`f32` or `f64`); the aliases at the crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod contrasts;
pub mod estimators;
pub mod error;
pub mod generator;
pub mod linalg;
pub mod models;
pub mod montecarlo;
pub mod optimizer;
pub mod paths;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod testing;

pub use error::{Error, Result};
pub use scalar::{Jet, Real, Scalar};

pub type Model = models::ModelSpec<f64>;
pub type Observations = paths::ObservationSet<f64>;
pub type Estimate = estimators::Estimate<f64>;
pub type Information = asymptotics::InfoMatrices<f64>;
pub type ParamBox = models::ParamBox<f64>;
pub type Matrix = linalg::Matrix<f64>;
