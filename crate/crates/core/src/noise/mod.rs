//! Alternative noise injections wired into the training loop: zero-mean
//! disentanglement noise whose covariance is the sign-reversed-off-diagonal
//! inverse curvature factor (volume expansion), and i.i.d. stochastic weight
//! noise (volume contraction), plus the expansion/contraction classifier.

use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_logdet, nearest_psd, MvnSampler};
use crate::nn::{
    backward_with, forward_with, gather_batch, init_network, sample_dropout_masks, sgd_step,
    DivergenceEvent, EpochStats, LayerSpec, MomentumState, NetworkParams, TrainConfig,
    TrainHistory, TrainOutcome,
};
use crate::volume::{kfac_factors, laplace_volume, volume_schedule, TrackSettings, VolumeTrail, VolumeReport};
use crate::DenseMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// No injected noise; plain training with a volume trail.
    None,
    /// Activation noise (strength lambda1) and node-loss noise (lambda2)
    /// drawn from the reversed inverse curvature factors.
    Disentangle,
    /// I.i.d. `N(0, lambda3^2)` added to every weight after each step.
    WeightNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mode: NoiseMode,
    /// Activation-noise strength.
    pub lambda1: f64,
    /// Node-loss-noise strength.
    pub lambda2: f64,
    /// Weight-noise standard deviation.
    pub lambda3: f64,
    /// Batches between sampler refreshes from the running factor estimate.
    pub refresh_every: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { mode: NoiseMode::None, lambda1: 0.0, lambda2: 0.0, lambda3: 0.0, refresh_every: 50 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.refresh_every == 0 {
            return Err(Error::InvalidSpec("refresh_every must be positive".into()));
        }
        Ok(())
    }

    fn injects_noise(&self) -> bool {
        match self.mode {
            NoiseMode::None => false,
            NoiseMode::Disentangle => self.lambda1 > 0.0 || self.lambda2 > 0.0,
            NoiseMode::WeightNoise => self.lambda3 > 0.0,
        }
    }
}

/// Noise covariance from a curvature factor: invert, reverse the signs of
/// the off-diagonal entries, and repair to PSD by clipping eigenvalues at 0.
/// Returns the zero mean vector and the repaired covariance.
pub fn reverse_noise_params(factor: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    let inv = cholesky_logdet(factor)?.inverse();
    let reversed = reverse_off_diagonal(&inv);
    let repaired = nearest_psd(&reversed, 0.0)?;
    Ok((vec![0.0; factor.rows()], repaired))
}

fn reverse_off_diagonal(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(m.rows(), m.cols(), |i, j| if i == j { m[(i, j)] } else { -m[(i, j)] })
}

/// Expansion/contraction verdict of a run against its baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeEffect {
    Expansion,
    Contraction,
    Neutral,
}

/// Compares the mean per-layer log-volumes of two runs, each layer's
/// log-volume normalized per dimension so the threshold `tau` (log units,
/// default 0.01) is meaningful across layer sizes.
pub fn classify_volume_effect(
    run: &VolumeReport,
    baseline: &VolumeReport,
    tau: f64,
) -> Result<VolumeEffect> {
    if run.per_layer.len() != baseline.per_layer.len() {
        return Err(Error::LayerMismatch(format!(
            "{} vs {} layers",
            run.per_layer.len(),
            baseline.per_layer.len()
        )));
    }
    for (a, b) in run.per_layer.iter().zip(&baseline.per_layer) {
        if a.layer != b.layer || a.dim != b.dim {
            return Err(Error::LayerMismatch(format!(
                "layer {} (dim {}) vs layer {} (dim {})",
                a.layer, a.dim, b.layer, b.dim
            )));
        }
    }
    let diff = run.mean_per_dim_log_vol() - baseline.mean_per_dim_log_vol();
    Ok(if diff > tau {
        VolumeEffect::Expansion
    } else if diff < -tau {
        VolumeEffect::Contraction
    } else {
        VolumeEffect::Neutral
    })
}

pub struct NoiseTrainOutcome {
    pub outcome: TrainOutcome,
    pub trail: VolumeTrail,
}

/// Per-layer noise samplers refreshed from the running factor estimates.
struct NoiseSamplers {
    /// Activation-noise sampler per non-output layer.
    activation: Vec<Option<MvnSampler<f64>>>,
    /// Node-loss sampler per layer.
    node_loss: Vec<Option<MvnSampler<f64>>>,
}

/// EMA state of the curvature factors gathered from training batches.
struct FactorEma {
    decay: f64,
    /// E[a_l a_l^T] for each layer output 0..L-1.
    activation: Vec<Option<DenseMatrix>>,
    /// Gauss-Newton E[d2 l / dh_l dh_l] per layer.
    node: Vec<Option<DenseMatrix>>,
}

impl FactorEma {
    fn new(layer_count: usize) -> Self {
        Self { decay: 0.95, activation: vec![None; layer_count], node: vec![None; layer_count] }
    }

    fn update(&mut self, fresh_act: Vec<DenseMatrix>, fresh_node: Vec<DenseMatrix>) {
        for (slot, fresh) in
            self.activation.iter_mut().zip(fresh_act).chain(self.node.iter_mut().zip(fresh_node))
        {
            *slot = Some(match slot.take() {
                Some(prev) => prev.scale(self.decay).add(&fresh.scale(1.0 - self.decay)),
                None => fresh,
            });
        }
    }
}

/// Training with injected noise per the gradient-update scheme: in
/// disentangle mode each mini-batch adds `lambda1 * eta_a` to every hidden
/// activation on the forward pass and `lambda2 * eta_h` to every layer's
/// per-sample node loss on the backward pass, with the batch-averaged
/// gradient fed to SGD as usual; in weight-noise mode i.i.d. Gaussian noise
/// is added to the weights after every step. A Laplace volume trail is
/// recorded on the tracker schedule. Zero-strength noise reproduces plain
/// training bit for bit.
pub fn train_with_noise(
    config: &TrainConfig,
    noise: &NoiseConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    layers: &[LayerSpec],
    track: &TrackSettings,
) -> Result<NoiseTrainOutcome> {
    config.validate()?;
    noise.validate()?;
    let layer_count = layers.len();
    let initial = init_network(layers, config.seed)?;
    let mut params = initial.clone();
    let mut momentum = MomentumState::zeros(&params);
    let mut mask_rng = crate::nn::seeded_rng(config.seed, crate::nn::RngStream::Masks);
    let mut noise_rng = crate::nn::seeded_rng(config.seed, crate::nn::RngStream::Noise);
    let use_masks = config.dropout_enabled && layers.iter().any(|l| l.dropout_rate > 0.0);
    let noise_active = noise.injects_noise();

    let schedule = volume_schedule(config.epochs, track.every_k_epochs);
    let mut trail_entries = Vec::new();
    let mut track_rng = ChaCha8Rng::seed_from_u64(config.seed);
    track_rng.set_stream(0x7261_636b);
    let factor_set = match track.sample_limit {
        Some(limit) if limit < train_set.len() => train_set.split_at(limit).0,
        _ => train_set.clone(),
    };
    let mut ema = FactorEma::new(layer_count);
    let mut samplers =
        NoiseSamplers { activation: vec![None; layer_count], node_loss: vec![None; layer_count] };

    // The trail measures the posterior of the actual training objective, so
    // injected activation noise joins the factor expectations exactly like
    // dropout masks do. Before the first sampler refresh (epoch 0) the
    // factors are plain.
    macro_rules! record_volume {
        ($epoch:expr, $params:expr) => {
            if schedule.contains(&$epoch) {
                let factors = if noise_active
                    && noise.mode == NoiseMode::Disentangle
                    && noise.lambda1 > 0.0
                    && samplers.activation.iter().any(Option::is_some)
                {
                    noisy_factors(
                        $params,
                        &factor_set,
                        &samplers,
                        noise.lambda1,
                        track.mask_draws,
                        track.damping_scale,
                        &mut track_rng,
                    )?
                } else {
                    kfac_factors(
                        $params,
                        &factor_set,
                        config.dropout_enabled,
                        track.mask_draws,
                        track.damping_scale,
                        &mut track_rng,
                    )?
                };
                trail_entries.push(($epoch, laplace_volume(&factors)?));
            }
        };
    }
    record_volume!(0, &params);
    let mut history = TrainHistory::default();
    let mut divergence: Option<DivergenceEvent> = None;
    let mut batch_counter = 0usize;

    'epochs: for epoch in 1..=config.epochs {
        let lr = config.lr_at_epoch(epoch);
        let plan = BatchPlan::new(config.batch_size, config.seed, epoch - 1);
        for (batch_idx, indices) in batches(train_set, &plan).into_iter().enumerate() {
            let (inputs, labels) = gather_batch(train_set, &indices);
            let masks =
                use_masks.then(|| sample_dropout_masks(layers, indices.len(), &mut mask_rng));

            let disentangle = noise_active && noise.mode == NoiseMode::Disentangle;
            if disentangle {
                if batch_counter % noise.refresh_every == 0 {
                    if ema.activation.iter().all(Option::is_none) {
                        // warm start from a clean pass over this batch
                        let trace = forward_with(&params, &inputs, &labels, masks.as_ref(), None)?;
                        let (fa, fn_) = batch_factor_means(&params, &trace);
                        ema.update(fa, fn_);
                    }
                    refresh_samplers(&mut samplers, &ema, noise, layer_count)?;
                }
                batch_counter += 1;
            }

            let act_noise = disentangle
                .then(|| draw_activation_noise(&samplers, noise.lambda1, indices.len(), &mut noise_rng))
                .flatten();
            let trace =
                forward_with(&params, &inputs, &labels, masks.as_ref(), act_noise.as_deref())?;

            let loss = trace.mean_loss();
            if !loss.is_finite() || loss > 1e4 {
                divergence = Some(DivergenceEvent { epoch, batch: batch_idx, loss });
                break 'epochs;
            }

            if disentangle {
                let (fa, fn_) = batch_factor_means(&params, &trace);
                ema.update(fa, fn_);
            }

            let node_noise = disentangle
                .then(|| {
                    draw_node_loss_noise(
                        &samplers,
                        noise.lambda2 / indices.len() as f64,
                        indices.len(),
                        &mut noise_rng,
                    )
                })
                .flatten();
            let grads = backward_with(&params, &trace, &labels, node_noise.as_deref())?;
            sgd_step(&mut params, &grads, lr, &mut momentum, config.momentum, config.weight_decay)?;

            if noise_active && noise.mode == NoiseMode::WeightNoise {
                for w in params.weights_mut() {
                    for v in w.data_mut() {
                        let z: f64 = rand_distr::Distribution::sample(
                            &rand_distr::StandardNormal,
                            &mut noise_rng,
                        );
                        *v += noise.lambda3 * z;
                    }
                }
            }
        }
        let (train_loss, train_acc) = crate::nn::evaluate(&params, train_set)?;
        let (test_loss, test_acc) = crate::nn::evaluate(&params, test_set)?;
        history.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
        });
        record_volume!(epoch, &params);
    }

    Ok(NoiseTrainOutcome {
        outcome: TrainOutcome {
            initial_params: initial,
            final_params: params,
            history,
            divergence,
        },
        trail: VolumeTrail { entries: trail_entries },
    })
}

/// Kronecker factors averaged over samples and injected activation-noise
/// draws; the disentanglement analog of the mask-averaged dropout factors.
fn noisy_factors(
    params: &NetworkParams,
    dataset: &Dataset,
    samplers: &NoiseSamplers,
    lambda1: f64,
    noise_draws: usize,
    damping_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<crate::volume::KroneckerFactors> {
    const CHUNK: usize = 256;
    let specs = params.layers();
    let layer_count = specs.len();
    let draws = noise_draws.max(1);
    let mut input_sums: Vec<DenseMatrix> =
        specs.iter().map(|s| DenseMatrix::zeros(s.in_dim, s.in_dim)).collect();
    let mut hess_sums: Vec<DenseMatrix> =
        specs.iter().map(|s| DenseMatrix::zeros(s.out_dim, s.out_dim)).collect();
    let mut total = 0.0;
    let n = dataset.len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (inputs, labels) = gather_batch(dataset, &indices);
        for _ in 0..draws {
            let act_noise = draw_activation_noise(samplers, lambda1, indices.len(), rng);
            let trace = forward_with(params, &inputs, &labels, None, act_noise.as_deref())?;
            for l in 0..layer_count {
                let a_in = trace.layer_input(l);
                input_sums[l] = input_sums[l].add(&a_in.tr_matmul(a_in));
            }
            let node = crate::volume::gauss_newton_batch_means(params, &trace);
            for (sum, mean) in hess_sums.iter_mut().zip(node) {
                *sum = sum.add(&mean.scale(indices.len() as f64));
            }
        }
        total += (indices.len() * draws) as f64;
        start = end;
    }
    let scale = 1.0 / total;
    let layers = (0..layer_count)
        .map(|l| {
            let damp = |factor: &DenseMatrix| {
                let k = factor.rows();
                let mean_diag = factor.diag().iter().sum::<f64>() / k as f64;
                let lambda = (damping_scale * mean_diag).max(1e-12);
                let mut out = factor.clone();
                for i in 0..k {
                    out[(i, i)] += lambda;
                }
                (out, lambda)
            };
            let (input_factor, input_damping) = damp(&input_sums[l].scale(scale));
            let (preact_hessian, preact_damping) = damp(&hess_sums[l].scale(scale));
            crate::volume::LayerFactors {
                in_dim: specs[l].in_dim,
                out_dim: specs[l].out_dim,
                input_factor,
                preact_hessian,
                input_damping,
                preact_damping,
            }
        })
        .collect();
    Ok(crate::volume::KroneckerFactors {
        layers,
        damping_scale,
        dropout_enabled: false,
        mask_draws: draws,
    })
}

/// Batch means of the activation second moments and Gauss-Newton node
/// Hessians, reusing the curvature recursion from the Laplace estimator.
fn batch_factor_means(
    params: &NetworkParams,
    trace: &crate::nn::ForwardTrace,
) -> (Vec<DenseMatrix>, Vec<DenseMatrix>) {
    let batch = trace.batch_size() as f64;
    let act = (0..params.layer_count())
        .map(|l| {
            let a = trace.activation(l);
            a.tr_matmul(a).scale(1.0 / batch)
        })
        .collect();
    let node = crate::volume::gauss_newton_batch_means(params, trace);
    (act, node)
}

fn refresh_samplers(
    samplers: &mut NoiseSamplers,
    ema: &FactorEma,
    noise: &NoiseConfig,
    layer_count: usize,
) -> Result<()> {
    for l in 0..layer_count {
        // activation noise never targets the softmax output layer
        if noise.lambda1 > 0.0 && l + 1 < layer_count {
            if let Some(factor) = &ema.activation[l] {
                samplers.activation[l] = Some(sampler_from_factor(factor)?);
            }
        }
        if noise.lambda2 > 0.0 {
            if let Some(factor) = &ema.node[l] {
                samplers.node_loss[l] = Some(sampler_from_factor(factor)?);
            }
        }
    }
    Ok(())
}

/// Builds the reverse-noise sampler for one factor.
///
/// The factor is damped before inversion (dead units would otherwise blow
/// the inverse up). The repaired covariance keeps the reversed correlation
/// structure but is rescaled so every unit's noise variance equals that
/// unit's own factor diagonal — the same per-unit scaling inverted dropout
/// applies — making the strength parameters dimensionless: strength
/// `lambda` perturbs each unit in proportion to its typical magnitude,
/// comparable to dropout with `q = lambda^2 / (1 + lambda^2)`. A hair of
/// jitter keeps the Cholesky factorization alive when the PSD repair
/// clipped an eigenvalue to exactly zero.
fn sampler_from_factor(factor: &DenseMatrix) -> Result<MvnSampler<f64>> {
    let n = factor.rows();
    let mean_diag = (factor.diag().iter().sum::<f64>() / n as f64).max(1e-12);
    let damping = 1e-2 * mean_diag;
    let mut damped = factor.clone();
    for i in 0..n {
        damped[(i, i)] += damping;
    }
    let (mean, cov) = reverse_noise_params(&damped)?;
    // rescale: corr(cov) sandwiched by the factor's per-unit scales
    let cov_diag = cov.diag();
    let target: Vec<f64> = (0..n).map(|i| damped[(i, i)].max(1e-12)).collect();
    let scale: Vec<f64> = (0..n)
        .map(|i| (target[i] / cov_diag[i].max(1e-300)).sqrt())
        .collect();
    let mut cov = DenseMatrix::from_fn(n, n, |i, j| cov[(i, j)] * scale[i] * scale[j]);
    for i in 0..n {
        cov[(i, i)] += 1e-10 * target[i];
    }
    MvnSampler::new(mean, &cov)
}

fn draw_activation_noise<R: Rng>(
    samplers: &NoiseSamplers,
    lambda1: f64,
    batch: usize,
    rng: &mut R,
) -> Option<Vec<Option<DenseMatrix>>> {
    if lambda1 == 0.0 {
        return None;
    }
    Some(draw_noise(&samplers.activation, lambda1, batch, rng))
}

fn draw_node_loss_noise<R: Rng>(
    samplers: &NoiseSamplers,
    scale: f64,
    batch: usize,
    rng: &mut R,
) -> Option<Vec<Option<DenseMatrix>>> {
    if scale == 0.0 {
        return None;
    }
    Some(draw_noise(&samplers.node_loss, scale, batch, rng))
}

fn draw_noise<R: Rng>(
    samplers: &[Option<MvnSampler<f64>>],
    scale: f64,
    batch: usize,
    rng: &mut R,
) -> Vec<Option<DenseMatrix>> {
    samplers
        .iter()
        .map(|slot| {
            slot.as_ref().map(|sampler| {
                let dim = sampler.dim();
                let mut m = DenseMatrix::zeros(batch, dim);
                for i in 0..batch {
                    let draw = sampler.draw(rng);
                    for (j, v) in draw.into_iter().enumerate() {
                        m[(i, j)] = scale * v;
                    }
                }
                m
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::{mlp_layers, train, Activation};
    use crate::volume::{LayerVolume, VolumeMethod};

    #[test]
    fn diagonal_factor_keeps_its_inverse() {
        let factor = DenseMatrix::from_diag(&[2.0, 4.0]);
        let (mean, cov) = reverse_noise_params(&factor).unwrap();
        assert_eq!(mean, vec![0.0, 0.0]);
        assert!((cov[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((cov[(1, 1)] - 0.25).abs() < 1e-12);
        assert!(cov[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn psd_reversal_is_left_alone() {
        // factor^-1 = [[1, 0.5], [0.5, 1]]: reversal flips the sign and the
        // result (eigenvalues 0.5, 1.5) needs no repair
        let inv = DenseMatrix::from_vec(2, 2, vec![1.0, 0.5, 0.5, 1.0]).unwrap();
        let factor = cholesky_logdet(&inv).unwrap().inverse();
        let (_, cov) = reverse_noise_params(&factor).unwrap();
        assert!((cov[(0, 1)] + 0.5).abs() < 1e-9);
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn indefinite_reversal_gets_clipped() {
        // inverse has off-diagonal magnitude above the diagonal, so the
        // reversed matrix is indefinite and the repair clips at zero
        let inv = DenseMatrix::from_vec(2, 2, vec![1.0, -1.2, -1.2, 2.0]).unwrap();
        let factor = cholesky_logdet(&inv).unwrap().inverse();
        let (_, cov) = reverse_noise_params(&factor).unwrap();
        let (eigs, _) = crate::linalg::sym_eig(&cov).unwrap();
        assert!(eigs.iter().all(|&l| l >= -1e-10));
        let expected = nearest_psd(&reverse_off_diagonal(&inv), 0.0).unwrap();
        assert!(cov.sub(&expected).max_abs() < 1e-9);
    }

    fn desk_config(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 25,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed,
            dropout_enabled: false,
        }
    }

    #[test]
    fn zero_strength_noise_reproduces_plain_training_bitwise() {
        let ds = synth_blobs(3, 6, 50, 0.8, 17).unwrap();
        let (train_set, test_set) = ds.split_at(100);
        let layers = mlp_layers(&[6, 10, 3], Activation::Relu, 0.0);
        let config = desk_config(41, 5);
        let plain = train(&config, &train_set, &test_set, &layers).unwrap();

        let track = TrackSettings { every_k_epochs: 100, ..TrackSettings::default() };
        for noise in [
            NoiseConfig { mode: NoiseMode::Disentangle, ..NoiseConfig::default() },
            NoiseConfig { mode: NoiseMode::WeightNoise, ..NoiseConfig::default() },
            NoiseConfig::default(),
        ] {
            let noisy =
                train_with_noise(&config, &noise, &train_set, &test_set, &layers, &track).unwrap();
            assert_eq!(noisy.outcome.history, plain.history, "mode {:?}", noise.mode);
            assert_eq!(noisy.outcome.final_params, plain.final_params);
        }
    }

    #[test]
    fn injected_noise_changes_training_but_not_divergence() {
        let ds = synth_blobs(3, 6, 50, 0.8, 18).unwrap();
        let (train_set, test_set) = ds.split_at(100);
        let layers = mlp_layers(&[6, 10, 3], Activation::Relu, 0.0);
        let config = desk_config(42, 4);
        let plain = train(&config, &train_set, &test_set, &layers).unwrap();
        let noise = NoiseConfig {
            mode: NoiseMode::Disentangle,
            lambda1: 0.05,
            lambda2: 0.05,
            refresh_every: 10,
            ..NoiseConfig::default()
        };
        let track = TrackSettings { every_k_epochs: 2, mask_draws: 1, ..TrackSettings::default() };
        let noisy = train_with_noise(&config, &noise, &train_set, &test_set, &layers, &track).unwrap();
        assert!(noisy.outcome.divergence.is_none());
        assert_ne!(noisy.outcome.history, plain.history);
        assert_eq!(noisy.trail.entries.len(), 2); // epochs 2 and 4
    }

    #[test]
    fn injected_noises_are_zero_mean() {
        // build samplers from a fixed factor and verify the running mean of
        // draws is within 3 standard errors of zero
        let factor = DenseMatrix::from_vec(2, 2, vec![2.0, 0.6, 0.6, 1.5]).unwrap();
        let sampler = sampler_from_factor(&factor).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut mean = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let d = sampler.draw(&mut rng);
            for j in 0..2 {
                mean[j] += d[j];
                sumsq[j] += d[j] * d[j];
            }
        }
        for j in 0..2 {
            mean[j] /= n as f64;
            let var = sumsq[j] / n as f64 - mean[j] * mean[j];
            let se = (var / n as f64).sqrt();
            assert!(mean[j].abs() <= 3.0 * se + 1e-9, "coordinate {j}: mean {} se {se}", mean[j]);
        }
    }

    fn toy_report(log_vols: &[f64]) -> VolumeReport {
        VolumeReport {
            method: VolumeMethod::Laplace,
            damping: 0.0,
            per_layer: log_vols
                .iter()
                .enumerate()
                .map(|(l, &lv)| LayerVolume {
                    layer: l,
                    dim: 10,
                    log_vol: lv,
                    per_dim_vol: (lv / 10.0).exp(),
                    k: None,
                    r: None,
                })
                .collect(),
        }
    }

    #[test]
    fn classifier_cases() {
        let base = toy_report(&[-1.0, -2.0]);
        assert_eq!(classify_volume_effect(&base, &base, 0.01).unwrap(), VolumeEffect::Neutral);
        let doubled = toy_report(&[-2.0, -4.0]);
        assert_eq!(
            classify_volume_effect(&doubled, &base, 0.01).unwrap(),
            VolumeEffect::Contraction
        );
        assert_eq!(
            classify_volume_effect(&base, &doubled, 0.01).unwrap(),
            VolumeEffect::Expansion
        );
        let mismatched = toy_report(&[-1.0]);
        assert!(matches!(
            classify_volume_effect(&mismatched, &base, 0.01),
            Err(Error::LayerMismatch(_))
        ));
    }
}
