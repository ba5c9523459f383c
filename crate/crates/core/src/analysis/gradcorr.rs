use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::nn::{
    backward, forward, gather_batch, sample_dropout_masks, train_with_observer, LayerSpec,
    NetworkParams, TrainConfig,
};
use crate::DenseMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MIN_PROBE_BATCHES: usize = 10;

/// Settings for the gradient-update correlation probe.
#[derive(Debug, Clone)]
pub struct ProbeSettings {
    /// Epochs at which weights are frozen and probed.
    pub checkpoints: Vec<usize>,
    /// Layer whose weight coordinates are probed.
    pub probe_layer: usize,
    /// Number of probed coordinates inside that layer.
    pub probe_units: usize,
    /// Mini-batches per probe (each yields one gradient observation).
    pub batches_per_probe: usize,
    pub batch_size: usize,
    pub probe_seed: u64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            probe_layer: 1,
            probe_units: 64,
            batches_per_probe: 50,
            batch_size: 32,
            probe_seed: 0x9e37,
        }
    }
}

/// Absolute correlation matrix of probed gradient coordinates across
/// mini-batches, with its mean off-diagonal entry.
#[derive(Debug, Clone)]
pub struct CorrelationProbe {
    pub epoch: usize,
    pub abs_correlation: DenseMatrix,
    pub mean_abs_off_diag: f64,
    /// Probed coordinates that survived the zero-variance filter.
    pub coords: Vec<usize>,
}

/// Mean off-diagonal |rho| per checkpoint for a plain run and its
/// dropout twin (same seed, data order, and architecture dims).
#[derive(Debug, Clone)]
pub struct GradCorrReport {
    pub plain: Vec<CorrelationProbe>,
    pub dropout: Vec<CorrelationProbe>,
}

/// Trains the plain and dropout runs side by side (identical seeds) and
/// probes the correlation of per-minibatch gradient updates at every
/// checkpoint. The dropout run keeps sampling fresh masks during its probe,
/// since its gradient noise is what the comparison is about.
pub fn gradient_update_correlation(
    plain_config: &TrainConfig,
    dropout_config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    plain_layers: &[LayerSpec],
    dropout_layers: &[LayerSpec],
    settings: &ProbeSettings,
) -> Result<GradCorrReport> {
    if settings.batches_per_probe < MIN_PROBE_BATCHES {
        return Err(Error::TooFewBatches {
            got: settings.batches_per_probe,
            min: MIN_PROBE_BATCHES,
        });
    }
    let plain = probe_run(plain_config, train_set, test_set, plain_layers, false, settings)?;
    let dropout = probe_run(dropout_config, train_set, test_set, dropout_layers, true, settings)?;
    Ok(GradCorrReport { plain, dropout })
}

fn probe_run(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    layers: &[LayerSpec],
    with_masks: bool,
    settings: &ProbeSettings,
) -> Result<Vec<CorrelationProbe>> {
    let mut snapshots: Vec<(usize, NetworkParams)> = Vec::new();
    train_with_observer(config, train_set, test_set, layers, |epoch, params| {
        if settings.checkpoints.contains(&epoch) {
            snapshots.push((epoch, params.clone()));
        }
        Ok(())
    })?;
    snapshots
        .into_iter()
        .map(|(epoch, params)| probe_params(&params, train_set, layers, with_masks, epoch, settings))
        .collect()
}

/// Freezes `params` and measures the correlation matrix of the probed
/// gradient coordinates across `batches_per_probe` mini-batches.
pub fn probe_params(
    params: &NetworkParams,
    dataset: &Dataset,
    layers: &[LayerSpec],
    with_masks: bool,
    epoch: usize,
    settings: &ProbeSettings,
) -> Result<CorrelationProbe> {
    if settings.batches_per_probe < MIN_PROBE_BATCHES {
        return Err(Error::TooFewBatches {
            got: settings.batches_per_probe,
            min: MIN_PROBE_BATCHES,
        });
    }
    let layer = settings.probe_layer.min(params.layer_count() - 1);
    let layer_dim = params.layers()[layer].weight_count();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.probe_seed);
    rng.set_stream(epoch as u64);
    let coords = sample_coords(layer_dim, settings.probe_units.min(layer_dim), &mut rng);

    // one gradient observation per mini-batch
    let mut observations = DenseMatrix::zeros(settings.batches_per_probe, coords.len());
    for b in 0..settings.batches_per_probe {
        let plan = BatchPlan::new(settings.batch_size, settings.probe_seed ^ 0x5bd1_e995, b);
        let indices = batches(dataset, &plan).into_iter().next().expect("non-empty dataset");
        let (inputs, labels) = gather_batch(dataset, &indices);
        let masks = with_masks.then(|| sample_dropout_masks(layers, indices.len(), &mut rng));
        let trace = forward(params, &inputs, &labels, masks.as_ref())?;
        let grads = backward(params, &trace, &labels)?;
        let flat = grads[layer].data();
        for (c, &coord) in coords.iter().enumerate() {
            observations[(b, c)] = flat[coord];
        }
    }
    correlation_probe(&observations, &coords, epoch)
}

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

fn correlation_probe(
    observations: &DenseMatrix,
    coords: &[usize],
    epoch: usize,
) -> Result<CorrelationProbe> {
    let n = observations.rows();
    let k = observations.cols();
    let mut means = vec![0.0f64; k];
    for b in 0..n {
        for (m, &v) in means.iter_mut().zip(observations.row(b)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut var = vec![0.0f64; k];
    for b in 0..n {
        for (j, &v) in observations.row(b).iter().enumerate() {
            var[j] += (v - means[j]).powi(2);
        }
    }
    // identical batches (or a frozen coordinate) have no gradient variance;
    // drop those coordinates and fail when nothing usable remains
    let keep: Vec<usize> = (0..k).filter(|&j| var[j] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::TooFewBatches { got: 0, min: MIN_PROBE_BATCHES });
    }
    let kk = keep.len();
    let mut corr = DenseMatrix::zeros(kk, kk);
    for (a, &ja) in keep.iter().enumerate() {
        for (b, &jb) in keep.iter().enumerate().skip(a) {
            let mut cov = 0.0;
            for r in 0..n {
                cov += (observations[(r, ja)] - means[ja]) * (observations[(r, jb)] - means[jb]);
            }
            let rho = (cov / (var[ja] * var[jb]).sqrt()).clamp(-1.0, 1.0).abs();
            corr[(a, b)] = rho;
            corr[(b, a)] = rho;
        }
    }
    let mut off_sum = 0.0;
    let mut off_count = 0usize;
    for a in 0..kk {
        for b in (a + 1)..kk {
            off_sum += corr[(a, b)];
            off_count += 1;
        }
    }
    let mean_abs_off_diag = if off_count == 0 { 0.0 } else { off_sum / off_count as f64 };
    Ok(CorrelationProbe {
        epoch,
        abs_correlation: corr,
        mean_abs_off_diag,
        coords: keep.iter().map(|&j| coords[j]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::{mlp_layers, Activation};

    fn quick_config(dropout: bool) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 25,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 8,
            dropout_enabled: dropout,
        }
    }

    #[test]
    fn correlation_matrices_are_unit_diagonal_and_bounded() {
        let ds = synth_blobs(3, 6, 60, 0.8, 6).unwrap();
        let (train_set, test_set) = ds.split_at(120);
        let plain_layers = mlp_layers(&[6, 10, 3], Activation::Relu, 0.0);
        let dropout_layers = mlp_layers(&[6, 10, 3], Activation::Relu, 0.3);
        let settings = ProbeSettings {
            checkpoints: vec![1, 2],
            probe_layer: 0,
            probe_units: 12,
            batches_per_probe: 12,
            batch_size: 20,
            probe_seed: 3,
        };
        let report = gradient_update_correlation(
            &quick_config(false),
            &quick_config(true),
            &train_set,
            &test_set,
            &plain_layers,
            &dropout_layers,
            &settings,
        )
        .unwrap();
        assert_eq!(report.plain.len(), 2);
        assert_eq!(report.dropout.len(), 2);
        for probe in report.plain.iter().chain(&report.dropout) {
            let m = &probe.abs_correlation;
            for i in 0..m.rows() {
                assert!((m[(i, i)] - 1.0).abs() < 1e-12);
                for j in 0..m.cols() {
                    assert!((0.0..=1.0).contains(&m[(i, j)]));
                }
            }
            assert!((0.0..=1.0).contains(&probe.mean_abs_off_diag));
        }
    }

    #[test]
    fn too_few_batches_is_rejected() {
        let settings = ProbeSettings { batches_per_probe: 5, ..ProbeSettings::default() };
        let ds = synth_blobs(2, 4, 20, 0.5, 1).unwrap();
        let layers = mlp_layers(&[4, 4, 2], Activation::Relu, 0.0);
        let params = crate::nn::init_network(&layers, 0).unwrap();
        assert!(matches!(
            probe_params(&params, &ds, &layers, false, 0, &settings),
            Err(Error::TooFewBatches { got: 5, .. })
        ));
    }

    #[test]
    fn zero_variance_everywhere_trips_the_guard() {
        // constant observations: every batch identical
        let obs = DenseMatrix::from_fn(12, 4, |_, j| j as f64);
        let coords = vec![0, 1, 2, 3];
        assert!(matches!(
            correlation_probe(&obs, &coords, 0),
            Err(Error::TooFewBatches { .. })
        ));
    }

    #[test]
    fn probe_of_one_unit_has_zero_off_diagonal_mean() {
        let obs = DenseMatrix::from_fn(12, 1, |i, _| (i as f64).sin());
        let probe = correlation_probe(&obs, &[7], 0).unwrap();
        assert_eq!(probe.mean_abs_off_diag, 0.0);
        assert_eq!(probe.abs_correlation.rows(), 1);
        assert_eq!(probe.coords, vec![7]);
    }
}
