//! Training and generalization-analysis toolkit for small fully-connected
//! networks built around the *weight volume*: the normalized generalized
//! variance (determinant of the correlation matrix) of a layer's weights,
//! treated as a multivariate random variable.
//!
//! The crate provides:
//!
//! * [`linalg`] — dense symmetric kernels (Cholesky log-determinants, Jacobi
//!   eigensolver, PSD repair, shrinkage, spectral norm, MVN sampling),
//!   generic over the scalar type;
//! * [`nn`] — a deterministic feedforward engine with inverted node dropout
//!   and SGD-with-momentum training;
//! * [`data`] — MNIST IDX ingestion, synthetic Gaussian blobs, seeded
//!   mini-batch plans;
//! * [`volume`] — two independent weight-volume estimators (posterior
//!   sampling and Kronecker-factored Laplace) plus a training-time tracker;
//! * [`measures`] — complexity measures including volume-aware PAC-Bayes
//!   scores and the shared sharpness sigma search;
//! * [`noise`] — disentanglement (volume-expanding) and stochastic weight
//!   (volume-contracting) noise injections wired into training;
//! * [`analysis`] — normalized/conditional mutual information, average
//!   sign-error, gradient-update correlation probes, and Monte-Carlo checks
//!   of the dropout covariance/correlation algebra.

pub mod analysis;
pub mod data;
mod error;
pub mod linalg;
pub mod measures;
pub mod nn;
pub mod noise;
pub mod volume;

pub use error::{Error, Result};

/// Concrete matrix type used by the network engine and all estimators.
pub type DenseMatrix = linalg::Matrix<f64>;

/// Single-precision alias for callers that want the generic kernels on f32.
pub type DenseMatrix32 = linalg::Matrix<f32>;
