//! Minimal fully-connected network engine: forward/backward with inverted
//! node dropout, SGD with momentum and weight decay, and deterministic
//! seeded training. No biases; datasets are mean-centered to compensate.

mod activation;
mod backward;
mod checkpoint;
mod dropout;
mod forward;
mod network;
mod optimizer;
mod train;

pub use activation::Activation;
pub use backward::backward;
pub(crate) use backward::backward_with;
pub(crate) use forward::forward_with;
pub use checkpoint::Checkpoint;
pub use dropout::{sample_dropout_masks, DropoutMasks};
pub use forward::{evaluate, forward, gather_batch, ForwardTrace};
pub use network::{init_network, mlp_layers, validate_layer_specs, LayerSpec, NetworkParams};
pub use optimizer::{sgd_step, MomentumState};
pub use train::{train, train_with_observer, DivergenceEvent, EpochStats, TrainConfig, TrainHistory, TrainOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha streams per purpose so that switching one noise source
/// on or off never perturbs the others (zero-strength noise must reproduce
/// plain training bit-for-bit).
#[derive(Debug, Clone, Copy)]
pub enum RngStream {
    /// Weight initialization.
    Init = 0,
    /// Dropout mask draws during training.
    Masks = 1,
    /// Injected activation/node-loss/weight noise.
    Noise = 2,
    /// Posterior sampling and sharpness perturbations.
    Perturb = 3,
}

/// Seeded generator on the given purpose stream.
pub fn seeded_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
