use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Cholesky factorization of a symmetric positive-definite matrix, carrying
/// the log-determinant so downstream volume code never forms a raw
/// determinant.
#[derive(Debug, Clone)]
pub struct SpdFactorization<T> {
    dim: usize,
    cholesky_factor: Matrix<T>,
    log_det: T,
}

/// Factors a symmetric matrix as `L * L^T` and accumulates
/// `log det = 2 * sum(log diag(L))`.
///
/// The input is symmetrized before factorization; a non-positive pivot
/// reports `NotPositiveDefinite` rather than silently clamping.
pub fn cholesky_logdet<T: Scalar>(s: &Matrix<T>) -> Result<SpdFactorization<T>> {
    let s = s.require_symmetric()?;
    let n = s.rows();
    let mut l = Matrix::zeros(n, n);
    let mut log_det = T::zero();
    for j in 0..n {
        let mut d = s[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {d:e} at column {j} of {n}x{n} matrix"
            )));
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        log_det += d.ln();
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(SpdFactorization { dim: n, cholesky_factor: l, log_det })
}

impl<T: Scalar> SpdFactorization<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lower-triangular factor L with `L L^T = S`.
    pub fn cholesky_factor(&self) -> &Matrix<T> {
        &self.cholesky_factor
    }

    pub fn log_det(&self) -> T {
        self.log_det
    }

    /// Solves `S x = b` by forward/backward substitution.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.dim);
        let l = &self.cholesky_factor;
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = l[(i, k)];
                y[i] = y[i] - lik * y[k];
            }
            y[i] = y[i] / l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = l[(k, i)];
                y[i] = y[i] - lki * y[k];
            }
            y[i] = y[i] / l[(i, i)];
        }
        y
    }

    /// Dense inverse `S^{-1}`, column by column from the factorization.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e);
            e[j] = T::zero();
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize away the last-bit asymmetry from columnwise solves
        let half = T::from_f64_lossy(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (inv[(i, j)] + inv[(j, i)]) * half;
                inv[(i, j)] = avg;
                inv[(j, i)] = avg;
            }
        }
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    #[test]
    fn identity_has_zero_logdet() {
        let f = cholesky_logdet(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.dim(), 3);
    }

    #[test]
    fn diagonal_logdet_is_sum_of_logs() {
        let f = cholesky_logdet(&Matrix::from_diag(&[2.0f64, 3.0])).unwrap();
        assert!((f.log_det() - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_and_eigen_logdet_agree_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m: Matrix<f64> = Matrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
        // M M^T + I is SPD
        let s = m.matmul(&m.transpose()).add(&Matrix::identity(5));
        let f = cholesky_logdet(&s).unwrap();

        let l = f.cholesky_factor();
        let rec = l.matmul(&l.transpose());
        let rel = rec.sub(&s).frobenius_norm() / s.frobenius_norm();
        assert!(rel < 1e-8, "reconstruction error {rel}");

        let (eigs, _) = sym_eig(&s).unwrap();
        let eig_logdet: f64 = eigs.iter().map(|&v| v.ln()).sum();
        assert!((f.log_det() - eig_logdet).abs() < 1e-8);
    }

    #[test]
    fn rejects_indefinite_and_rank_deficient() {
        // eigenvalues 3, -1
        let ind = Matrix::from_vec(2, 2, vec![1.0f64, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(cholesky_logdet(&ind), Err(Error::NotPositiveDefinite(_))));
        // duplicated row/column
        let rank1 = Matrix::from_vec(2, 2, vec![1.0f64, 1.0, 1.0, 1.0]).unwrap();
        assert!(cholesky_logdet(&rank1).is_err());
    }

    #[test]
    fn solve_and_inverse_are_consistent() {
        let s = Matrix::from_vec(3, 3, vec![4.0f64, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let f = cholesky_logdet(&s).unwrap();
        let b = vec![1.0, 2.0, 3.0];
        let x = f.solve(&b);
        let back = s.matvec(&x);
        for (a, b) in back.iter().zip(&b) {
            assert!((a - b).abs() < 1e-10);
        }
        let inv = f.inverse();
        let prod = s.matmul(&inv);
        let err = prod.sub(&Matrix::identity(3)).max_abs();
        assert!(err < 1e-10);
    }

    #[test]
    fn works_for_f32_too() {
        let f = cholesky_logdet(&Matrix::<f32>::from_diag(&[2.0, 8.0])).unwrap();
        assert!((f.log_det() - 16.0f32.ln()).abs() < 1e-5);
    }
}
