use super::network::LayerSpec;
use crate::DenseMatrix;
use rand::Rng;

/// Batch-shaped inverted-dropout masks, one optional matrix per layer.
/// Entries are 0 with probability `q` and `1/(1-q)` otherwise, so each mask
/// entry has unit expectation. Layers with `q = 0` carry no mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    per_layer: Vec<Option<DenseMatrix>>,
    batch_size: usize,
}

impl DropoutMasks {
    /// All-identity masks (evaluation mode).
    pub fn identity(layer_count: usize, batch_size: usize) -> Self {
        Self { per_layer: vec![None; layer_count], batch_size }
    }

    pub fn layer(&self, l: usize) -> Option<&DenseMatrix> {
        self.per_layer[l].as_ref()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn layer_count(&self) -> usize {
        self.per_layer.len()
    }

    pub fn is_identity(&self) -> bool {
        self.per_layer.iter().all(Option::is_none)
    }
}

/// Samples fresh masks for every layer with a nonzero dropout rate.
pub fn sample_dropout_masks<R: Rng>(
    layers: &[LayerSpec],
    batch_size: usize,
    rng: &mut R,
) -> DropoutMasks {
    let per_layer = layers
        .iter()
        .map(|spec| {
            if spec.dropout_rate == 0.0 {
                return None;
            }
            let q = spec.dropout_rate;
            let keep_scale = 1.0 / (1.0 - q);
            let mut mask = DenseMatrix::zeros(batch_size, spec.out_dim);
            for v in mask.data_mut() {
                if rng.gen::<f64>() >= q {
                    *v = keep_scale;
                }
            }
            Some(mask)
        })
        .collect();
    DropoutMasks { per_layer, batch_size }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::mlp_layers;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_means_identity() {
        let layers = mlp_layers(&[4, 8, 3], Activation::Relu, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let masks = sample_dropout_masks(&layers, 5, &mut rng);
        assert!(masks.is_identity());
    }

    #[test]
    fn surviving_entries_scale_to_two_at_half_rate() {
        let layers = mlp_layers(&[4, 64, 3], Activation::Relu, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let masks = sample_dropout_masks(&layers, 8, &mut rng);
        let m = masks.layer(0).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(masks.layer(1).is_none(), "output layer never masked");
    }

    #[test]
    fn monte_carlo_mean_and_zero_fraction() {
        let layers = mlp_layers(&[1, 100, 2], Activation::Relu, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 10_000; // 10^6 entries in total
        let mut sum = 0.0;
        let mut zeros = 0usize;
        let mut count = 0usize;
        for _ in 0..draws {
            let masks = sample_dropout_masks(&layers, 1, &mut rng);
            for &v in masks.layer(0).unwrap().data() {
                sum += v;
                count += 1;
                if v == 0.0 {
                    zeros += 1;
                }
            }
        }
        let mean = sum / count as f64;
        let zero_frac = zeros as f64 / count as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((zero_frac - 0.3).abs() < 0.01, "zero fraction {zero_frac}");
    }
}
