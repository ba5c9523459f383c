use super::kfac::{kfac_factors, laplace_volume};
use super::VolumeReport;
use crate::data::Dataset;
use crate::error::Result;
use crate::nn::{train_with_observer, LayerSpec, TrainConfig, TrainOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Settings for the periodic Laplace-volume reports taken during training.
#[derive(Debug, Clone)]
pub struct TrackSettings {
    pub every_k_epochs: usize,
    pub mask_draws: usize,
    pub damping_scale: f64,
    /// Cap on the number of samples used for factor estimation (front slice).
    pub sample_limit: Option<usize>,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self { every_k_epochs: 5, mask_draws: 8, damping_scale: 1e-4, sample_limit: None }
    }
}

/// Time series of per-epoch volume reports.
#[derive(Debug, Clone)]
pub struct VolumeTrail {
    pub entries: Vec<(usize, VolumeReport)>,
}

impl VolumeTrail {
    pub fn final_report(&self) -> Option<&VolumeReport> {
        self.entries.last().map(|(_, r)| r)
    }
}

/// Epochs at which a tracked run reports volume: every `k`-th epoch plus the
/// final epoch (for a zero-epoch run, just the initial weights).
pub fn volume_schedule(epochs: usize, every_k: usize) -> Vec<usize> {
    let k = every_k.max(1);
    if epochs == 0 {
        return vec![0];
    }
    let mut schedule: Vec<usize> = (1..=epochs).filter(|e| e % k == 0).collect();
    if schedule.last() != Some(&epochs) {
        schedule.push(epochs);
    }
    schedule
}

/// Trains while emitting a Laplace volume report on the schedule above.
/// Factors are estimated in evaluation mode (plus mask draws when the run
/// uses dropout) without perturbing the training state; the tracker draws
/// its masks from a dedicated stream so tracking never changes the run.
pub fn track_volume(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    layers: &[LayerSpec],
    settings: &TrackSettings,
) -> Result<(TrainOutcome, VolumeTrail)> {
    let schedule = volume_schedule(config.epochs, settings.every_k_epochs);
    let mut entries = Vec::with_capacity(schedule.len());
    let factor_set = match settings.sample_limit {
        Some(limit) if limit < train_set.len() => {
            let (head, _) = train_set.split_at(limit);
            head
        }
        _ => train_set.clone(),
    };
    // tracking rng is independent of every training stream
    let mut track_rng = ChaCha8Rng::seed_from_u64(config.seed);
    track_rng.set_stream(0x7261_636b); // "rack"

    let outcome = train_with_observer(config, train_set, test_set, layers, |epoch, params| {
        if schedule.contains(&epoch) {
            let factors = kfac_factors(
                params,
                &factor_set,
                config.dropout_enabled,
                settings.mask_draws,
                settings.damping_scale,
                &mut track_rng,
            )?;
            entries.push((epoch, laplace_volume(&factors)?));
        }
        Ok(())
    })?;
    Ok((outcome, VolumeTrail { entries }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::{init_network, mlp_layers, Activation};
    use crate::volume::kfac::kfac_factors;

    #[test]
    fn schedule_shapes() {
        assert_eq!(volume_schedule(10, 3), vec![3, 6, 9, 10]);
        assert_eq!(volume_schedule(10, 5), vec![5, 10]);
        // k larger than the run: a single report at the end
        assert_eq!(volume_schedule(10, 20), vec![10]);
        assert_eq!(volume_schedule(0, 4), vec![0]);
    }

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 32,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 13,
            dropout_enabled: false,
        }
    }

    #[test]
    fn zero_epoch_trail_reports_initial_volume() {
        let ds = synth_blobs(3, 6, 40, 0.6, 2).unwrap();
        let (train_set, test_set) = ds.split_at(90);
        let layers = mlp_layers(&[6, 8, 3], Activation::Relu, 0.0);
        let settings = TrackSettings { every_k_epochs: 4, ..TrackSettings::default() };
        let (outcome, trail) = track_volume(&quick_config(0), &train_set, &test_set, &layers, &settings).unwrap();
        assert_eq!(trail.entries.len(), 1);
        assert_eq!(trail.entries[0].0, 0);

        // report of the untouched initial weights matches a direct call
        let params = init_network(&layers, 13).unwrap();
        assert_eq!(params, outcome.initial_params);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        rng.set_stream(0x7261_636b);
        let factors = kfac_factors(&params, &train_set, false, 8, 1e-4, &mut rng).unwrap();
        let direct = laplace_volume(&factors).unwrap();
        assert_eq!(trail.entries[0].1, direct);
    }

    #[test]
    fn tracking_does_not_perturb_training() {
        let ds = synth_blobs(3, 6, 40, 0.6, 5).unwrap();
        let (train_set, test_set) = ds.split_at(90);
        let layers = mlp_layers(&[6, 8, 3], Activation::Relu, 0.25);
        let mut config = quick_config(6);
        config.dropout_enabled = true;
        let settings = TrackSettings { every_k_epochs: 2, mask_draws: 2, ..TrackSettings::default() };
        let (tracked, trail) = track_volume(&config, &train_set, &test_set, &layers, &settings).unwrap();
        let plain = crate::nn::train(&config, &train_set, &test_set, &layers).unwrap();
        assert_eq!(tracked.history, plain.history);
        assert_eq!(tracked.final_params, plain.final_params);
        assert_eq!(trail.entries.len(), 3); // epochs 2, 4, 6
    }
}
