use super::{LayerVolume, VolumeMethod, VolumeReport};
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::nn::{backward, evaluate, forward, gather_batch, MomentumState, NetworkParams};
use crate::{linalg, DenseMatrix};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Protocol knobs for the posterior sampler. Defaults follow the reference
/// protocol: perturbation std 0.1, one fine-tuning epoch at learning rate
/// 1e-4, acceptance band epsilon = 0.05 around the converged training loss.
#[derive(Debug, Clone)]
pub struct PosteriorConfig {
    pub n_iters: usize,
    pub epsilon: f64,
    pub perturb_std: f64,
    pub fine_tune_lr: f64,
    pub fine_tune_batch: usize,
    /// Fine-tune with the network's own dropout masks active. Keeps the
    /// walker stationary for dropout-trained networks: a mask-free
    /// fine-tune would keep optimizing the eval loss and leave the
    /// acceptance shell downward.
    pub fine_tune_dropout: bool,
    pub min_samples: usize,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            n_iters: 200,
            epsilon: 0.05,
            perturb_std: 0.1,
            fine_tune_lr: 1e-4,
            fine_tune_batch: 128,
            fine_tune_dropout: false,
            min_samples: 16,
        }
    }
}

/// Accepted posterior weight snapshots, flattened per layer.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    /// `per_layer[l]` is an (accepted x layer_dim) matrix of snapshots.
    per_layer: Vec<DenseMatrix>,
    pub epsilon: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl PosteriorSamples {
    pub fn layer_count(&self) -> usize {
        self.per_layer.len()
    }

    pub fn layer_samples(&self, l: usize) -> &DenseMatrix {
        &self.per_layer[l]
    }

    /// Builds the sample container from raw per-layer snapshot lists
    /// (used by tests that draw synthetic posteriors).
    pub fn from_snapshots(per_layer: Vec<DenseMatrix>, epsilon: f64, rejected: usize) -> Self {
        let accepted = per_layer.first().map_or(0, |m| m.rows());
        Self { per_layer, epsilon, accepted, rejected }
    }
}

/// Random-walk posterior sampling around a converged network: perturb all
/// weights with isotropic noise, fine-tune one epoch at a small learning
/// rate, and keep the snapshot when its training loss is within `epsilon`
/// of the reference loss.
pub fn collect_posterior_samples<R: Rng>(
    params: &NetworkParams,
    dataset: &Dataset,
    config: &PosteriorConfig,
    rng: &mut R,
) -> Result<PosteriorSamples> {
    if config.epsilon <= 0.0 {
        return Err(Error::InvalidSpec("posterior epsilon must be positive".into()));
    }
    let (base_loss, _) = evaluate(params, dataset)?;
    let layer_count = params.layer_count();
    let mut snapshots: Vec<Vec<f64>> = vec![Vec::new(); layer_count];
    let mut accepted = 0usize;
    let mut rejected = 0usize;

    let mut walker = params.clone();
    let weight_count = walker.weight_count();
    for _ in 0..config.n_iters {
        // isotropic Gaussian kick on every weight
        let noise: Vec<f64> = (0..weight_count)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                config.perturb_std * z
            })
            .collect();
        walker.add_flat(&noise);

        fine_tune_epoch(
            &mut walker,
            dataset,
            config.fine_tune_lr,
            config.fine_tune_batch,
            config.fine_tune_dropout,
            rng,
        )?;

        let (loss, _) = evaluate(&walker, dataset)?;
        if (loss - base_loss).abs() <= config.epsilon {
            accepted += 1;
            for l in 0..layer_count {
                snapshots[l].extend_from_slice(walker.weights()[l].data());
            }
        } else {
            rejected += 1;
        }
    }

    if accepted < config.min_samples {
        return Err(Error::TooFewSamples { got: accepted, min: config.min_samples });
    }
    let per_layer = snapshots
        .into_iter()
        .enumerate()
        .map(|(l, flat)| {
            let dim = params.layers()[l].weight_count();
            DenseMatrix::from_vec(accepted, dim, flat)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSamples { per_layer, epsilon: config.epsilon, accepted, rejected })
}

/// One epoch of plain SGD (no momentum, no decay) used to settle the walker
/// back onto the loss shell, optionally in dropout mode.
fn fine_tune_epoch<R: Rng>(
    params: &mut NetworkParams,
    dataset: &Dataset,
    lr: f64,
    batch_size: usize,
    with_dropout: bool,
    rng: &mut R,
) -> Result<()> {
    let mut momentum = MomentumState::zeros(params);
    let layers = params.layers().to_vec();
    let use_masks = with_dropout && layers.iter().any(|l| l.dropout_rate > 0.0);
    let plan = BatchPlan::new(batch_size, rng.gen(), 0);
    for indices in batches(dataset, &plan) {
        let (inputs, labels) = gather_batch(dataset, &indices);
        let masks =
            use_masks.then(|| crate::nn::sample_dropout_masks(&layers, indices.len(), rng));
        let trace = forward(params, &inputs, &labels, masks.as_ref())?;
        let grads = backward(params, &trace, &labels)?;
        crate::nn::sgd_step(params, &grads, lr, &mut momentum, 0.0, 0.0)?;
    }
    Ok(())
}

/// Subset parameters for the sampling estimator: `k` coordinates per subset,
/// `subset_count` subsets per layer, diagonal shrinkage `gamma`.
#[derive(Debug, Clone)]
pub struct SamplingVolumeConfig {
    pub subset_size: usize,
    pub subset_count: usize,
    pub shrinkage: f64,
}

impl Default for SamplingVolumeConfig {
    fn default() -> Self {
        Self { subset_size: 50, subset_count: 20, shrinkage: 0.1 }
    }
}

/// Weight volume from posterior samples.
///
/// A full-layer empirical covariance from a few hundred samples is
/// rank-deficient, so each layer is measured on random coordinate subsets of
/// size `min(k, dim)`: per subset, form the empirical covariance over the
/// accepted samples, shrink it toward its diagonal, and take the normalized
/// log-volume. The layer estimate is the mean per-dimension log-volume
/// across subsets.
pub fn sampling_volume<R: Rng>(
    samples: &PosteriorSamples,
    config: &SamplingVolumeConfig,
    rng: &mut R,
) -> Result<VolumeReport> {
    let n_s = samples.accepted;
    let mut per_layer = Vec::with_capacity(samples.layer_count());
    for l in 0..samples.layer_count() {
        let mat = samples.layer_samples(l);
        let dim = mat.cols();
        let k = config.subset_size.min(dim).max(1);
        if n_s < 3 * k {
            return Err(Error::TooFewSamples { got: n_s, min: 3 * k });
        }
        let subset_count = if k == dim { 1 } else { config.subset_count.max(1) };

        let mut per_dim_log_vols = Vec::with_capacity(subset_count);
        let mut skipped = 0usize;
        for _ in 0..subset_count {
            let coords = sample_coords(dim, k, rng);
            let cov = empirical_covariance(mat, &coords);
            let shrunk = linalg::shrink_covariance(&cov, config.shrinkage);
            match linalg::normalized_log_volume(&shrunk) {
                Ok((log_vol, _)) => per_dim_log_vols.push(log_vol / k as f64),
                Err(Error::NotPositiveDefinite(_)) | Err(Error::ZeroVariance { .. }) => {
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if per_dim_log_vols.is_empty() {
            return Err(Error::NotPositiveDefinite(format!(
                "all {skipped} coordinate subsets of layer {l} were degenerate"
            )));
        }
        let mean_per_dim =
            per_dim_log_vols.iter().sum::<f64>() / per_dim_log_vols.len() as f64;
        let log_vol = (mean_per_dim * dim as f64).min(0.0);
        per_layer.push(LayerVolume {
            layer: l,
            dim,
            log_vol,
            per_dim_vol: mean_per_dim.min(0.0).exp(),
            k: Some(k),
            r: Some(per_dim_log_vols.len()),
        });
    }
    let report = VolumeReport {
        method: VolumeMethod::Sampling,
        damping: config.shrinkage,
        per_layer,
    };
    report.validate()?;
    Ok(report)
}

/// `k` distinct coordinates via partial Fisher-Yates, sorted for
/// reproducible covariance layouts.
fn sample_coords<R: Rng>(dim: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..dim).collect();
    for i in 0..k {
        let j = rng.gen_range(i..dim);
        pool.swap(i, j);
    }
    let mut coords = pool[..k].to_vec();
    coords.sort_unstable();
    coords
}

fn empirical_covariance(samples: &DenseMatrix, coords: &[usize]) -> DenseMatrix {
    let n = samples.rows();
    let k = coords.len();
    let mut means = vec![0.0f64; k];
    for s in 0..n {
        let row = samples.row(s);
        for (m, &c) in means.iter_mut().zip(coords) {
            *m += row[c];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut cov = DenseMatrix::zeros(k, k);
    for s in 0..n {
        let row = samples.row(s);
        for i in 0..k {
            let di = row[coords[i]] - means[i];
            for j in i..k {
                let dj = row[coords[j]] - means[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = (n - 1).max(1) as f64;
    for i in 0..k {
        for j in i..k {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::linalg::{equicorrelation, MvnSampler};
    use crate::nn::{mlp_layers, train, Activation, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick_trained() -> (NetworkParams, Dataset) {
        let ds = synth_blobs(3, 6, 60, 0.7, 21).unwrap();
        let (train_set, test_set) = ds.split_at(120);
        let layers = mlp_layers(&[6, 8, 3], Activation::Relu, 0.0);
        let config = TrainConfig {
            epochs: 8,
            batch_size: 32,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 2,
            dropout_enabled: false,
        };
        let out = train(&config, &train_set, &test_set, &layers).unwrap();
        (out.final_params, train_set)
    }

    #[test]
    fn huge_epsilon_accepts_every_iteration() {
        let (params, ds) = quick_trained();
        let config = PosteriorConfig {
            n_iters: 5,
            epsilon: 1e9,
            perturb_std: 0.05,
            min_samples: 5,
            ..PosteriorConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let samples = collect_posterior_samples(&params, &ds, &config, &mut rng).unwrap();
        assert_eq!(samples.accepted, 5);
        assert_eq!(samples.rejected, 0);
        assert_eq!(samples.layer_count(), 2);
        assert_eq!(samples.layer_samples(0).cols(), 48);
    }

    #[test]
    fn zero_iterations_is_too_few_samples() {
        let (params, ds) = quick_trained();
        let config = PosteriorConfig { n_iters: 0, ..PosteriorConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        match collect_posterior_samples(&params, &ds, &config, &mut rng) {
            Err(Error::TooFewSamples { got: 0, .. }) => {}
            other => panic!("expected TooFewSamples, got {other:?}"),
        }
    }

    #[test]
    fn default_config_matches_protocol_values() {
        let d = PosteriorConfig::default();
        assert_eq!(d.perturb_std, 0.1);
        assert_eq!(d.fine_tune_lr, 1e-4);
        assert_eq!(d.epsilon, 0.05);
        let s = SamplingVolumeConfig::default();
        assert_eq!((s.subset_size, s.subset_count), (50, 20));
        assert_eq!(s.shrinkage, 0.1);
    }

    /// Synthetic posterior drawn from a known equicorrelated Gaussian: the
    /// estimator should recover the closed-form per-dimension volume.
    #[test]
    fn recovers_equicorrelation_volume_from_synthetic_samples() {
        let n_dim = 20;
        let rho = 0.4;
        let sigma = equicorrelation(n_dim, rho);
        let sampler = MvnSampler::new(vec![0.0; n_dim], &sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n_s = 2000;
        let mut flat = Vec::with_capacity(n_s * n_dim);
        for _ in 0..n_s {
            flat.extend(sampler.draw(&mut rng));
        }
        let mat = DenseMatrix::from_vec(n_s, n_dim, flat).unwrap();
        let samples = PosteriorSamples::from_snapshots(vec![mat], 0.05, 0);
        let config = SamplingVolumeConfig { subset_size: 20, subset_count: 4, shrinkage: 0.0 };
        let report = sampling_volume(&samples, &config, &mut rng).unwrap();

        // closed form: vol = (1-rho)^(n-1) (1 + (n-1) rho)
        let vol = (1.0 - rho).powi(n_dim as i32 - 1) * (1.0 + (n_dim as f64 - 1.0) * rho);
        let expected_per_dim = (vol.ln() / n_dim as f64).exp();
        let got = report.per_layer[0].per_dim_vol;
        assert!(
            (got - expected_per_dim).abs() < 0.1 * expected_per_dim,
            "estimated {got}, closed form {expected_per_dim}"
        );
    }

    #[test]
    fn isotropic_samples_approach_unit_volume() {
        let n_dim = 20;
        let sampler = MvnSampler::new(vec![0.0; n_dim], &DenseMatrix::identity(n_dim)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let mut make_report = |n_s: usize| {
            let mut flat = Vec::with_capacity(n_s * n_dim);
            for _ in 0..n_s {
                flat.extend(sampler.draw(&mut rng));
            }
            let mat = DenseMatrix::from_vec(n_s, n_dim, flat).unwrap();
            let samples = PosteriorSamples::from_snapshots(vec![mat], 0.05, 0);
            let config = SamplingVolumeConfig { subset_size: 20, subset_count: 4, shrinkage: 0.0 };
            sampling_volume(&samples, &config, &mut rng).unwrap().per_layer[0].per_dim_vol
        };
        let v_small = make_report(500);
        let v_large = make_report(2000);
        assert!(v_large > 0.95, "isotropic per-dim volume {v_large}");
        // estimator consistency: error shrinks with more samples
        assert!((1.0 - v_large) <= (1.0 - v_small), "{v_small} -> {v_large}");
    }

    #[test]
    fn single_coordinate_subsets_have_unit_volume() {
        let mat = DenseMatrix::from_fn(30, 5, |i, j| (i as f64 * 0.1) + (j as f64));
        let samples = PosteriorSamples::from_snapshots(vec![mat], 0.05, 0);
        let config = SamplingVolumeConfig { subset_size: 1, subset_count: 6, shrinkage: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let report = sampling_volume(&samples, &config, &mut rng).unwrap();
        assert_eq!(report.per_layer[0].per_dim_vol, 1.0);
        assert_eq!(report.per_layer[0].log_vol, 0.0);
    }

    #[test]
    fn too_few_samples_for_subset_size_errors() {
        let mat = DenseMatrix::from_fn(10, 8, |i, j| (i + j) as f64);
        let samples = PosteriorSamples::from_snapshots(vec![mat], 0.05, 0);
        let config = SamplingVolumeConfig { subset_size: 8, subset_count: 2, shrinkage: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        assert!(matches!(
            sampling_volume(&samples, &config, &mut rng),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
