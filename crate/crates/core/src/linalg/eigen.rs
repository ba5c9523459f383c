use super::{Matrix, Scalar};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching orthonormal
/// eigenvectors as matrix columns. Adequate for the dimensions used here
/// (couple of hundred at most); errors with `NoConvergence` if the
/// off-diagonal mass does not vanish within the sweep cap.
pub fn sym_eig<T: Scalar>(s: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let mut a = s.require_symmetric()?;
    let n = a.rows();
    let mut v = Matrix::identity(n);
    if n <= 1 {
        return Ok((a.diag(), v));
    }

    let tol = T::from_f64_lossy(1e-12).max(T::epsilon());
    let scale = a.frobenius_norm().max(T::one());
    let mut converged = false;
    let mut last_off = T::zero();
    for _sweep in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(&a);
        last_off = off;
        if off <= tol * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= T::epsilon() * scale {
                    continue;
                }
                let (c, sn) = rotation(a[(p, p)], a[(q, q)], apq);
                apply_rotation(&mut a, &mut v, p, q, c, sn);
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > tol * scale {
        return Err(Error::NoConvergence {
            sweeps: MAX_SWEEPS,
            off: last_off.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = a.diag();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let eigenvalues: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok((eigenvalues, vectors))
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    (s + s).sqrt()
}

fn rotation<T: Scalar>(app: T, aqq: T, apq: T) -> (T, T) {
    let theta = (aqq - app) / (apq + apq);
    let t = {
        let denom = theta.abs() + (T::one() + theta * theta).sqrt();
        let t = T::one() / denom;
        if theta < T::zero() {
            -t
        } else {
            t
        }
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    (c, t * c)
}

fn apply_rotation<T: Scalar>(a: &mut Matrix<T>, v: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Clips eigenvalues below `floor` in the eigenbasis:
/// `V diag(max(lambda, floor)) V^T`. Used to repair indefinite noise
/// covariances before sampling.
pub fn nearest_psd<T: Scalar>(s: &Matrix<T>, floor: T) -> Result<Matrix<T>> {
    assert!(floor >= T::zero(), "floor must be non-negative");
    let (eigs, v) = sym_eig(s)?;
    let n = s.rows();
    let clipped: Vec<T> = eigs.iter().map(|&l| l.max(floor)).collect();
    // V diag(clipped) V^T
    let mut scaled = v.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] = v[(i, j)] * clipped[j];
        }
    }
    let mut out = scaled.matmul(&v.transpose());
    let half = T::from_f64_lossy(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (out[(i, j)] + out[(j, i)]) * half;
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    Ok(out)
}
