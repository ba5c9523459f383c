use super::{cholesky_logdet, Matrix, Scalar};
use crate::error::{Error, Result};

/// Normalizes a covariance matrix to its correlation matrix
/// `C_ij = S_ij / sqrt(S_ii * S_jj)`.
pub fn correlation_from_covariance<T: Scalar>(sigma: &Matrix<T>) -> Result<Matrix<T>> {
    let sigma = sigma.require_symmetric()?;
    let n = sigma.rows();
    let mut inv_std = Vec::with_capacity(n);
    for i in 0..n {
        let v = sigma[(i, i)];
        if v <= T::zero() {
            return Err(Error::ZeroVariance { index: i, value: v.to_f64().unwrap_or(f64::NAN) });
        }
        inv_std.push(T::one() / v.sqrt());
    }
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = sigma[(i, j)] * inv_std[i] * inv_std[j];
        }
        c[(i, i)] = T::one();
    }
    Ok(c)
}

/// Log of the normalized generalized variance of a covariance matrix:
/// `log det(S) - sum_i log S_ii`, together with the per-dimension value
/// `exp(log_vol / dim)`.
///
/// Everything stays in log space; the raw determinant of a realistic layer
/// covariance would under/overflow long before the normalization could
/// cancel it.
pub fn normalized_log_volume<T: Scalar>(sigma: &Matrix<T>) -> Result<(T, T)> {
    let fact = cholesky_logdet(sigma)?;
    let mut diag_log = T::zero();
    for i in 0..sigma.rows() {
        let v = sigma[(i, i)];
        if v <= T::zero() {
            return Err(Error::ZeroVariance { index: i, value: v.to_f64().unwrap_or(f64::NAN) });
        }
        diag_log += v.ln();
    }
    let log_vol = fact.log_det() - diag_log;
    // Hadamard: det(S) <= prod(S_ii), so log_vol <= 0 up to rounding.
    let log_vol = log_vol.min(T::zero());
    let dim = T::from_usize(sigma.rows()).expect("dimension fits scalar");
    let per_dim = (log_vol / dim).exp();
    Ok((log_vol, per_dim))
}

/// Convex shrinkage toward the diagonal: `(1-gamma) * S + gamma * diag(S)`.
/// Never decreases the normalized volume.
pub fn shrink_covariance<T: Scalar>(sigma: &Matrix<T>, gamma: T) -> Matrix<T> {
    assert!(
        gamma >= T::zero() && gamma <= T::one(),
        "shrinkage gamma must lie in [0, 1]"
    );
    let n = sigma.rows();
    let keep = T::one() - gamma;
    let mut out = sigma.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[(i, j)] = out[(i, j)] * keep;
            }
        }
    }
    out
}

/// Equicorrelation matrix with unit diagonal and constant off-diagonal `rho`.
pub fn equicorrelation<T: Scalar>(n: usize, rho: T) -> Matrix<T> {
    Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eig;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix<f64> {
        let m: Matrix<f64> = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        m.matmul(&m.transpose()).add(&Matrix::identity(n).scale(0.5))
    }

    #[test]
    fn correlation_normalization_cases() {
        let c = correlation_from_covariance(&Matrix::from_diag(&[4.0f64, 9.0])).unwrap();
        assert!(c.sub(&Matrix::identity(2)).max_abs() < 1e-15);

        let already = Matrix::from_vec(2, 2, vec![1.0f64, 0.5, 0.5, 1.0]).unwrap();
        let c = correlation_from_covariance(&already).unwrap();
        assert!(c.sub(&already).max_abs() < 1e-15);

        let s = Matrix::from_vec(2, 2, vec![4.0f64, 2.0, 2.0, 4.0]).unwrap();
        let c = correlation_from_covariance(&s).unwrap();
        assert!((c[(0, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(c[(0, 0)], 1.0);

        let degenerate = Matrix::from_vec(2, 2, vec![0.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            correlation_from_covariance(&degenerate),
            Err(Error::ZeroVariance { index: 0, .. })
        ));
    }

    #[test]
    fn correlation_entries_bounded_on_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let s = random_spd(&mut rng, 5);
            let c = correlation_from_covariance(&s).unwrap();
            for i in 0..5 {
                assert_eq!(c[(i, i)], 1.0);
                for j in 0..5 {
                    assert!(c[(i, j)].abs() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn equicorrelation_volume_matches_closed_form() {
        // vol = (1-rho)^(n-1) * (1 + (n-1) rho)
        let (log_vol, per_dim) = normalized_log_volume(&equicorrelation(3, 0.5f64)).unwrap();
        assert!((log_vol.exp() - 0.5).abs() < 1e-12);
        assert!((per_dim - 0.5f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn diagonal_covariance_has_unit_volume() {
        let (log_vol, per_dim) = normalized_log_volume(&Matrix::from_diag(&[0.1f64, 7.0, 2.0])).unwrap();
        assert_eq!(log_vol, 0.0);
        assert_eq!(per_dim, 1.0);
    }

    #[test]
    fn rank_deficient_covariance_errors() {
        let s = Matrix::from_vec(2, 2, vec![1.0f64, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(normalized_log_volume(&s), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn volume_invariant_under_diagonal_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = random_spd(&mut rng, 4);
            let (v0, _) = normalized_log_volume(&s).unwrap();
            let d: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..10.0)).collect();
            let scaled = Matrix::from_fn(4, 4, |i, j| s[(i, j)] * d[i] * d[j]);
            let (v1, _) = normalized_log_volume(&scaled).unwrap();
            assert!((v0 - v1).abs() < 1e-9, "rescaling changed log-volume: {v0} vs {v1}");
        }
    }

    #[test]
    fn per_dim_volume_in_unit_interval_and_one_iff_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let s = random_spd(&mut rng, 4);
            let (_, per_dim) = normalized_log_volume(&s).unwrap();
            assert!(per_dim > 0.0 && per_dim <= 1.0);
            let c = correlation_from_covariance(&s).unwrap();
            let off = (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j)
                .map(|(i, j)| c[(i, j)].abs())
                .fold(0.0f64, f64::max);
            if off > 1e-5 {
                assert!(per_dim < 1.0);
            }
        }
        let (_, per_dim) = normalized_log_volume(&Matrix::from_diag(&[2.0f64, 3.0, 4.0])).unwrap();
        assert_eq!(per_dim, 1.0);
    }

    #[test]
    fn shrinkage_cases_and_monotonicity() {
        let s = Matrix::from_vec(2, 2, vec![1.0f64, 0.8, 0.8, 1.0]).unwrap();
        let half = shrink_covariance(&s, 0.5);
        assert!((half[(0, 1)] - 0.4).abs() < 1e-15);
        assert_eq!(half[(0, 0)], 1.0);
        assert_eq!(shrink_covariance(&s, 0.0), s);
        let full = shrink_covariance(&s, 1.0);
        assert_eq!(full, Matrix::from_diag(&[1.0, 1.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let s = random_spd(&mut rng, 4);
            let gamma = rng.gen_range(0.0..1.0);
            let (v0, _) = normalized_log_volume(&s).unwrap();
            let (v1, _) = normalized_log_volume(&shrink_covariance(&s, gamma)).unwrap();
            assert!(v1 >= v0 - 1e-12, "shrinkage decreased volume: {v0} -> {v1}");
        }
    }

    #[test]
    fn shrunk_logdet_agrees_with_eigen_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = random_spd(&mut rng, 6);
        let f = cholesky_logdet(&s).unwrap();
        let (eigs, _) = sym_eig(&s).unwrap();
        let sum_log: f64 = eigs.iter().map(|&l| l.ln()).sum();
        assert!((f.log_det() - sum_log).abs() < 1e-8);
    }
}
