//! Dataset ingestion and batching: MNIST-style IDX files, synthetic Gaussian
//! blobs, and deterministic shuffled mini-batch plans.

mod idx;
mod synth;

pub use idx::load_idx;
pub use synth::synth_blobs;

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// In-memory classification dataset. Features are row-major `n x d`,
/// read-only after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    class_count: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, class_count: usize) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::InvalidSpec("dataset needs at least one sample and one feature".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} labels x {} features need {} values, got {}",
                labels.len(),
                dim,
                labels.len() * dim,
                features.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidSpec(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("features must be finite".into()));
        }
        Ok(Self { features, labels, dim, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Splits off the first `n` samples as one dataset and the rest as another.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        assert!(n > 0 && n < self.len(), "split point must be interior");
        let head = Dataset {
            features: self.features[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
            class_count: self.class_count,
        };
        let tail = Dataset {
            features: self.features[n * self.dim..].to_vec(),
            labels: self.labels[n..].to_vec(),
            dim: self.dim,
            class_count: self.class_count,
        };
        (head, tail)
    }

    /// Subtracts the global scalar mean of all feature values, compensating
    /// for the bias-free network.
    pub fn mean_center(&mut self) {
        let n = self.features.len();
        if n == 0 {
            return;
        }
        let mean = self.features.iter().sum::<f64>() / n as f64;
        for v in &mut self.features {
            *v -= mean;
        }
    }

    /// CSV export with header `f0..f{d-1},label`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim {
            out.push_str(&format!("f{j},"));
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for v in self.feature_row(i) {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{}\n", self.label(i)));
        }
        out
    }
}

/// Seeded mini-batch schedule: the permutation of indices is a pure function
/// of `(shuffle_seed, epoch)`.
#[derive(Debug, Clone, Copy)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub epoch: usize,
}

impl BatchPlan {
    pub fn new(batch_size: usize, shuffle_seed: u64, epoch: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be at least 1");
        Self { batch_size, shuffle_seed, epoch }
    }
}

/// Splits a fresh permutation of `0..dataset.len()` into `ceil(n / batch)`
/// slices; the last partial batch is kept.
pub fn batches(dataset: &Dataset, plan: &BatchPlan) -> Vec<Vec<usize>> {
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.shuffle_seed);
    rng.set_stream(plan.epoch as u64 + 1);
    // Fisher-Yates, spelled out so the permutation depends only on our own
    // draw sequence
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order.chunks(plan.batch_size).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn tiny() -> Dataset {
        Dataset::new(vec![0.0; 10 * 3], vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 3, 2).unwrap()
    }

    #[test]
    fn batches_partition_the_index_set() {
        let d = tiny();
        for epoch in 0..3 {
            let plan = BatchPlan::new(3, 9, epoch);
            let slices = batches(&d, &plan);
            assert_eq!(slices.len(), 4); // ceil(10/3), last partial kept
            assert_eq!(slices.last().unwrap().len(), 1);
            let all: Vec<usize> = slices.iter().flatten().copied().collect();
            let set: BTreeSet<usize> = all.iter().copied().collect();
            assert_eq!(all.len(), 10);
            assert_eq!(set.len(), 10);
        }
    }

    #[test]
    fn oversized_batch_yields_single_slice() {
        let d = tiny();
        let slices = batches(&d, &BatchPlan::new(64, 1, 0));
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].len(), 10);
    }

    #[test]
    fn permutations_differ_by_epoch_but_are_reproducible() {
        let d = tiny();
        let e0 = batches(&d, &BatchPlan::new(10, 7, 0));
        let e1 = batches(&d, &BatchPlan::new(10, 7, 1));
        assert_ne!(e0, e1);
        assert_eq!(e0, batches(&d, &BatchPlan::new(10, 7, 0)));
        assert_eq!(e1, batches(&d, &BatchPlan::new(10, 7, 1)));
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], 2, 2).is_err());
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], 2, 2).is_err());
        assert!(Dataset::new(vec![f64::INFINITY, 0.0], vec![0], 2, 1).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let d = Dataset::new(vec![1.5, -2.0, 0.25, 3.0], vec![1, 0], 2, 2).unwrap();
        let csv = d.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "f0,f1,label");
        assert_eq!(lines.next().unwrap(), "1.5,-2,1");
        assert_eq!(lines.next().unwrap(), "0.25,3,0");
    }
}
