use super::backward::backward;
use super::dropout::sample_dropout_masks;
use super::forward::{evaluate, forward, gather_batch};
use super::network::{init_network, LayerSpec, NetworkParams};
use super::optimizer::{sgd_step, MomentumState};
use super::{seeded_rng, RngStream};
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Batch loss above this, or any non-finite loss, aborts the run.
pub(crate) const DIVERGENCE_THRESHOLD: f64 = 1e4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Halve the learning rate every this many epochs; `None` means every
    /// 20% of the total epoch budget.
    pub lr_halve_every: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub dropout_enabled: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidSpec(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidSpec(format!("weight decay {} must be >= 0", self.weight_decay)));
        }
        if let Some(0) = self.lr_halve_every {
            return Err(Error::InvalidSpec("lr_halve_every must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate in force during `epoch` (1-based).
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let period = self.lr_halve_every.unwrap_or_else(|| (self.epochs / 5).max(1)).max(1);
        let halvings = (epoch.saturating_sub(1)) / period;
        self.learning_rate * 0.5f64.powi(halvings as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_stats(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }

    /// Test loss minus train loss at the final epoch.
    pub fn generalization_gap(&self) -> Option<(f64, f64)> {
        self.final_stats().map(|s| (s.test_loss - s.train_loss, s.test_acc - s.train_acc))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,learning_rate,train_loss,train_acc,test_loss,test_acc\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.learning_rate, e.train_loss, e.train_acc, e.test_loss, e.test_acc
            ));
        }
        out
    }
}

/// Loss blow-up record: training stopped here and the outcome carries the
/// partial history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial_params: NetworkParams,
    pub final_params: NetworkParams,
    pub history: TrainHistory,
    pub divergence: Option<DivergenceEvent>,
}

impl TrainOutcome {
    /// Converts a diverged outcome into the corresponding error.
    pub fn into_result(self) -> Result<TrainOutcome> {
        match self.divergence {
            Some(d) => {
                Err(Error::DivergenceDetected { epoch: d.epoch, batch: d.batch, loss: d.loss })
            }
            None => Ok(self),
        }
    }
}

/// Trains a freshly initialized network with SGD + momentum, recording
/// per-epoch train/test loss and accuracy. Fully deterministic per seed.
pub fn train(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    layers: &[LayerSpec],
) -> Result<TrainOutcome> {
    train_with_observer(config, train_set, test_set, layers, |_, _| Ok(()))
}

/// `train` with a per-epoch observer: called once with the initial weights
/// (epoch 0) and again after every epoch. Observers must not mutate shared
/// training state; they exist for tracking and snapshotting.
pub fn train_with_observer(
    config: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    layers: &[LayerSpec],
    mut observer: impl FnMut(usize, &NetworkParams) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.dim() != layers.first().map_or(0, |l| l.in_dim) {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} does not match first layer in_dim",
            train_set.dim()
        )));
    }
    let initial = init_network(layers, config.seed)?;
    let mut params = initial.clone();
    let mut momentum = MomentumState::zeros(&params);
    let mut mask_rng = seeded_rng(config.seed, RngStream::Masks);
    let use_masks = config.dropout_enabled && layers.iter().any(|l| l.dropout_rate > 0.0);

    let mut history = TrainHistory::default();
    observer(0, &params)?;
    for epoch in 1..=config.epochs {
        let lr = config.lr_at_epoch(epoch);
        let plan = BatchPlan::new(config.batch_size, config.seed, epoch - 1);
        for (batch_idx, indices) in batches(train_set, &plan).into_iter().enumerate() {
            let (inputs, labels) = gather_batch(train_set, &indices);
            let masks = use_masks.then(|| sample_dropout_masks(layers, indices.len(), &mut mask_rng));
            let trace = forward(&params, &inputs, &labels, masks.as_ref())?;
            let loss = trace.mean_loss();
            if !loss.is_finite() || loss > DIVERGENCE_THRESHOLD {
                return Ok(TrainOutcome {
                    initial_params: initial,
                    final_params: params,
                    history,
                    divergence: Some(DivergenceEvent { epoch, batch: batch_idx, loss }),
                });
            }
            let grads = backward(&params, &trace, &labels)?;
            sgd_step(&mut params, &grads, lr, &mut momentum, config.momentum, config.weight_decay)?;
        }
        let (train_loss, train_acc) = evaluate(&params, train_set)?;
        let (test_loss, test_acc) = evaluate(&params, test_set)?;
        history.epochs.push(EpochStats {
            epoch,
            learning_rate: lr,
            train_loss,
            train_acc,
            test_loss,
            test_acc,
        });
        observer(epoch, &params)?;
    }

    Ok(TrainOutcome { initial_params: initial, final_params: params, history, divergence: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::network::mlp_layers;
    use crate::nn::Activation;

    fn blob_pair(spread: f64) -> (Dataset, Dataset) {
        let ds = synth_blobs(2, 4, 120, spread, 33).unwrap();
        ds.split_at(160)
    }

    #[test]
    fn separable_blobs_reach_high_train_accuracy() {
        let (train_set, test_set) = blob_pair(0.3);
        let layers = mlp_layers(&[4, 8, 2], Activation::Relu, 0.0);
        let config = TrainConfig {
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 5,
            dropout_enabled: false,
        };
        let out = train(&config, &train_set, &test_set, &layers).unwrap();
        assert!(out.divergence.is_none());
        let last = out.history.final_stats().unwrap();
        assert!(last.train_acc >= 0.95, "train accuracy {}", last.train_acc);
    }

    #[test]
    fn zero_epochs_returns_initial_weights_and_empty_history() {
        let (train_set, test_set) = blob_pair(0.5);
        let layers = mlp_layers(&[4, 6, 2], Activation::Tanh, 0.0);
        let config = TrainConfig {
            epochs: 0,
            batch_size: 16,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 5,
            dropout_enabled: false,
        };
        let out = train(&config, &train_set, &test_set, &layers).unwrap();
        assert_eq!(out.final_params, out.initial_params);
        assert!(out.history.epochs.is_empty());
    }

    #[test]
    fn identical_seed_gives_bit_identical_history() {
        let (train_set, test_set) = blob_pair(0.8);
        let layers = mlp_layers(&[4, 8, 2], Activation::Relu, 0.25);
        let config = TrainConfig {
            epochs: 6,
            batch_size: 20,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 77,
            dropout_enabled: true,
        };
        let a = train(&config, &train_set, &test_set, &layers).unwrap();
        let b = train(&config, &train_set, &test_set, &layers).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.final_params, b.final_params);
        // losses stay non-negative
        assert!(a.history.epochs.iter().all(|e| e.train_loss >= 0.0 && e.test_loss >= 0.0));
    }

    #[test]
    fn lr_schedule_halves_every_fifth_of_the_run() {
        let config = TrainConfig {
            epochs: 30,
            batch_size: 1,
            learning_rate: 0.1,
            lr_halve_every: None,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            dropout_enabled: false,
        };
        assert_eq!(config.lr_at_epoch(1), 0.1);
        assert_eq!(config.lr_at_epoch(6), 0.1);
        assert_eq!(config.lr_at_epoch(7), 0.05);
        assert_eq!(config.lr_at_epoch(13), 0.025);
        assert_eq!(config.lr_at_epoch(30), 0.1 * 0.5f64.powi(4));
    }

    #[test]
    fn runaway_learning_rate_reports_divergence() {
        let (train_set, test_set) = blob_pair(0.5);
        let layers = mlp_layers(&[4, 8, 2], Activation::Relu, 0.0);
        let config = TrainConfig {
            epochs: 10,
            batch_size: 16,
            learning_rate: 1e9,
            lr_halve_every: None,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 3,
            dropout_enabled: false,
        };
        let out = train(&config, &train_set, &test_set, &layers).unwrap();
        let event = out.divergence.expect("should diverge");
        assert!(event.loss > DIVERGENCE_THRESHOLD || !event.loss.is_finite());
        assert!(matches!(
            out.into_result(),
            Err(Error::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn observer_sees_epoch_zero_and_every_epoch() {
        let (train_set, test_set) = blob_pair(0.5);
        let layers = mlp_layers(&[4, 6, 2], Activation::Relu, 0.0);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 32,
            learning_rate: 0.05,
            lr_halve_every: None,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 1,
            dropout_enabled: false,
        };
        let mut seen = Vec::new();
        train_with_observer(&config, &train_set, &test_set, &layers, |e, _| {
            seen.push(e);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }
}
