use super::{Matrix, Scalar};

/// Largest singular value of `m` by power iteration on `M^T M`.
///
/// Deterministic (fixed starting vector) and tolerant of rank-deficient
/// input; a zero matrix returns 0.
pub fn spectral_norm<T: Scalar>(m: &Matrix<T>, iters: usize) -> T {
    assert!(m.rows() > 0 && m.cols() > 0, "spectral_norm needs a non-empty matrix");
    let n = m.cols();
    if m.max_abs() == T::zero() {
        return T::zero();
    }
    // deterministic, generically non-orthogonal start
    let mut v: Vec<T> = (0..n)
        .map(|i| T::one() + T::from_usize(i % 7).unwrap() * T::from_f64_lossy(0.137))
        .collect();
    normalize(&mut v);
    let mut sigma_sq = T::zero();
    for _ in 0..iters.max(1) {
        let mv = m.matvec(&v);
        let mut w = m.tr_matvec(&mv);
        sigma_sq = w.iter().zip(&v).map(|(&a, &b)| a * b).sum();
        if normalize(&mut w) == T::zero() {
            return T::zero();
        }
        v = w;
    }
    sigma_sq.max(T::zero()).sqrt()
}

fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x = *x / norm;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_case() {
        let m = Matrix::from_diag(&[3.0f64, 1.0]);
        assert!((spectral_norm(&m, 100) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn zero_matrix_returns_zero() {
        assert_eq!(spectral_norm(&Matrix::<f64>::zeros(3, 2), 50), 0.0);
    }

    #[test]
    fn rank_one_outer_product() {
        // u v^T with |u| = 2, |v| = 5 has spectral norm 10
        let u = [2.0f64, 0.0, 0.0];
        let v = [3.0f64, 4.0];
        let m: Matrix<f64> = Matrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        assert!((spectral_norm(&m, 100) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn matches_eigen_oracle_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let m: Matrix<f64> = Matrix::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
            let gram = m.tr_matmul(&m);
            let (eigs, _) = sym_eig(&gram).unwrap();
            let oracle = eigs[0].max(0.0).sqrt();
            let est = spectral_norm(&m, 500);
            assert!(
                (est - oracle).abs() <= 1e-6 * oracle.max(1.0),
                "power iteration {est} vs eigen {oracle}"
            );
        }
    }
}
