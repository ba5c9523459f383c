use super::Dataset;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Synthetic Gaussian blobs: class `c` is centered on the `c`-th vertex of a
/// regular simplex scaled to norm 2.0, with isotropic noise of the given
/// standard deviation. Seed-stable stand-in for MNIST when the IDX files are
/// not available.
///
/// The simplex construction needs `dim >= class_count`; vertices sum to zero
/// so a balanced dataset is mean-centered by construction.
pub fn synth_blobs(
    class_count: usize,
    dim: usize,
    n_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if class_count < 2 {
        return Err(Error::InvalidSpec("synth_blobs needs at least 2 classes".into()));
    }
    if dim < class_count {
        return Err(Error::InvalidSpec(format!(
            "simplex construction needs dim >= class_count ({dim} < {class_count})"
        )));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidSpec("n_per_class must be positive".into()));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::InvalidSpec(format!("spread must be finite and >= 0, got {spread}")));
    }

    let centers = simplex_centers(class_count, dim);
    let n = class_count * n_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    // interleave classes so truncation keeps the set roughly balanced
    for i in 0..n_per_class {
        let _ = i;
        for (c, center) in centers.iter().enumerate() {
            for &m in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spread * noise);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, dim, class_count)
}

/// Vertices of a regular simplex with `count` points of norm 2.0 in
/// `dim >= count` dimensions, summing to zero.
pub fn simplex_centers(count: usize, dim: usize) -> Vec<Vec<f64>> {
    let offset = 1.0 / count as f64;
    let norm = (1.0 - offset).sqrt();
    (0..count)
        .map(|c| {
            let mut v = vec![0.0; dim];
            for (j, item) in v.iter_mut().enumerate().take(count) {
                let base = if j == c { 1.0 - offset } else { -offset };
                *item = 2.0 * base / norm;
            }
            v
        })
        .collect()
}
