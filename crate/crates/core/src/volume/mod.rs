//! The two independent weight-volume estimators: posterior sampling around a
//! trained network and a Kronecker-factored Laplace approximation, plus a
//! training-time volume tracker.

mod kfac;
mod posterior;
mod track;

pub use kfac::{kfac_factors, laplace_layer_details, laplace_volume, KroneckerFactors, LaplaceLayerDetail, LayerFactors};
pub(crate) use kfac::gauss_newton_batch_means;
pub use posterior::{collect_posterior_samples, sampling_volume, PosteriorConfig, PosteriorSamples, SamplingVolumeConfig};
pub use track::{track_volume, volume_schedule, TrackSettings, VolumeTrail};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeMethod {
    Sampling,
    Laplace,
}

/// Per-layer normalized volume of one layer's weight posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerVolume {
    pub layer: usize,
    /// Number of weights covered (N_{l-1} * N_l).
    pub dim: usize,
    /// Full log-volume of the layer, `log det(corr(Sigma))`, <= 0.
    pub log_vol: f64,
    /// `exp(log_vol / dim)`, the cross-layer comparable scalar in (0, 1].
    pub per_dim_vol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
}

/// Volume estimates for every layer of one network, tagged with the
/// estimator that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub method: VolumeMethod,
    pub damping: f64,
    pub per_layer: Vec<LayerVolume>,
}

impl VolumeReport {
    pub fn layer(&self, l: usize) -> Option<&LayerVolume> {
        self.per_layer.iter().find(|lv| lv.layer == l)
    }

    /// Block-diagonal total: the sum of per-layer log-volumes.
    pub fn total_log_vol(&self) -> f64 {
        self.per_layer.iter().map(|l| l.log_vol).sum()
    }

    /// Mean over layers of the per-dimension log-volume; the scalar used for
    /// expansion/contraction comparisons.
    pub fn mean_per_dim_log_vol(&self) -> f64 {
        let sum: f64 = self.per_layer.iter().map(|l| l.log_vol / l.dim as f64).sum();
        sum / self.per_layer.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        for l in &self.per_layer {
            if !(l.per_dim_vol > 0.0 && l.per_dim_vol <= 1.0 + 1e-12) {
                return Err(Error::InvalidSpec(format!(
                    "layer {} per_dim_vol {} outside (0, 1]",
                    l.layer, l.per_dim_vol
                )));
            }
            if l.log_vol > 1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "layer {} log_vol {} must be <= 0",
                    l.layer, l.log_vol
                )));
            }
        }
        Ok(())
    }
}
