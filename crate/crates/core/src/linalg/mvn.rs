use super::{cholesky_logdet, Matrix, Scalar};
use crate::error::Result;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reusable multivariate-normal sampler: factors the covariance once and
/// draws `mean + L z` afterwards.
#[derive(Debug, Clone)]
pub struct MvnSampler<T> {
    mean: Vec<T>,
    factor: Matrix<T>,
}

impl<T: Scalar> MvnSampler<T>
where
    StandardNormal: Distribution<T>,
{
    /// Requires SPD covariance; callers repair indefinite matrices with
    /// `nearest_psd` (plus a jitter floor) first.
    pub fn new(mean: Vec<T>, sigma: &Matrix<T>) -> Result<Self> {
        let fact = cholesky_logdet(sigma)?;
        assert_eq!(mean.len(), fact.dim(), "mean dimension must match covariance");
        Ok(Self { mean, factor: fact.cholesky_factor().clone() })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<T> {
        let n = self.mean.len();
        let z: Vec<T> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let mut out = self.mean.clone();
        for i in 0..n {
            let row = self.factor.row(i);
            let mut acc = T::zero();
            for k in 0..=i {
                acc += row[k] * z[k];
            }
            out[i] += acc;
        }
        out
    }
}

/// One sample from `N(mean, sigma)`. Prefer `MvnSampler` when drawing many
/// samples from the same covariance.
pub fn sample_mvn<T: Scalar, R: Rng>(mean: &[T], sigma: &Matrix<T>, rng: &mut R) -> Result<Vec<T>>
where
    StandardNormal: Distribution<T>,
{
    Ok(MvnSampler::new(mean.to_vec(), sigma)?.draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_covariance_is_an_error() {
        let sigma = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_mvn(&[0.0, 0.0], &sigma, &mut rng).is_err());
    }

    #[test]
    fn identity_covariance_matches_monte_carlo() {
        let sigma = Matrix::<f64>::identity(3);
        let sampler = MvnSampler::new(vec![0.0; 3], &sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let mut cov = [[0.0f64; 3]; 3];
        let mut mean = [0.0f64; 3];
        let samples: Vec<Vec<f64>> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
        for s in &samples {
            for i in 0..3 {
                mean[i] += s[i];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        for s in &samples {
            for i in 0..3 {
                for j in 0..3 {
                    cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let c = cov[i][j] / (n as f64 - 1.0);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((c - target).abs() < 0.05, "cov[{i}][{j}] = {c}");
            }
        }
    }

    #[test]
    fn tiny_covariance_reproduces_mean() {
        let sigma = Matrix::from_diag(&[1e-12f64, 1e-12]);
        let mean = vec![4.0, -2.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_mvn(&mean, &sigma, &mut rng).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-5);
        assert!((s[1] + 2.5).abs() < 1e-5);
    }
}
