//! Neural estimation of entropic optimal transport (EOT).
//!
//! The crate estimates the quadratic-cost EOT distance between two sample
//! sets by maximizing the empirical semi-dual objective over a shallow ReLU
//! network, and reads off the induced transport plan from the trained
//! potential. A log-domain Sinkhorn solver provides the ground truth.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`numerics`] | dense matrices, log-sum-exp, Cholesky, seeded RNG streams |
//! | [`transport`] | empirical measures, (c,ε)-transform, semi-dual objective, neural plan, KL |
//! | [`net`] | the shallow ReLU potential and its exact loss gradient |
//! | [`adam`] | Adam optimizer over network parameters |
//! | [`sinkhorn`] | log-domain Sinkhorn solver (dense and streaming) |
//! | [`synthetic`] | uniform/Gaussian generators and plan sampling |
//! | [`estimator`] | the minibatch training loop |
//!
//! ```
//! use neural_eot::estimator::{fit, TrainConfig};
//! use neural_eot::numerics::RealMatrix;
//!
//! let x = RealMatrix::from_rows(&[vec![0.0]]).unwrap();
//! let y = RealMatrix::from_rows(&[vec![1.0]]).unwrap();
//! let cfg = TrainConfig { batch: 1, ..TrainConfig::new(0.5, 4) };
//! let res = fit(&x, &y, &cfg).unwrap();
//! assert!((res.estimate - 0.5).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adam;
pub mod estimator;
pub mod net;
pub mod numerics;
pub mod sinkhorn;
pub mod synthetic;
pub mod transport;

use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("sinkhorn did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
