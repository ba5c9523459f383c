//! Dense symmetric/general matrix kernels shared by every estimator:
//! Cholesky log-determinants, a cyclic Jacobi eigensolver, correlation
//! normalization, PSD repair, covariance shrinkage, power-iteration spectral
//! norms, and multivariate-normal sampling.
//!
//! Everything here is generic over the scalar type; the rest of the crate
//! instantiates the `f64` aliases exported from the crate root.

mod cholesky;
mod eigen;
mod matrix;
mod mvn;
mod spectral;
mod volume;

pub use cholesky::{cholesky_logdet, SpdFactorization};
pub use eigen::{nearest_psd, sym_eig};
pub use matrix::Matrix;
pub use mvn::{sample_mvn, MvnSampler};
pub use spectral::spectral_norm;
pub use volume::{correlation_from_covariance, equicorrelation, normalized_log_volume, shrink_covariance};

use num_traits::{Float, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

/// Scalar type the matrix kernels operate over (f32 or f64).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64, for tolerances and literals.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Relative symmetry tolerance accepted by the symmetric kernels.
pub(crate) fn symmetry_tol<T: Scalar>() -> T {
    T::from_f64_lossy(1e-10).max(T::epsilon() * T::from_f64_lossy(100.0))
}
