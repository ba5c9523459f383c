use super::network::{LayerSpec, NetworkParams};
use crate::error::{Error, Result};
use crate::DenseMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// On-disk network snapshot. Weights are stored row-major per layer as
/// decimal 64-bit floats; serde's shortest-round-trip float formatting makes
/// write -> read -> write byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_specs: Vec<LayerSpec>,
    pub weights: Vec<Vec<f64>>,
    pub seed: u64,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn from_params(params: &NetworkParams, seed: u64, epoch: usize) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_specs: params.layers().to_vec(),
            weights: (0..params.layer_count()).map(|l| params.flatten_layer(l)).collect(),
            seed,
            epoch,
        }
    }

    pub fn to_params(&self) -> Result<NetworkParams> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        let weights = self
            .layer_specs
            .iter()
            .zip(&self.weights)
            .map(|(spec, flat)| DenseMatrix::from_vec(spec.out_dim, spec.in_dim, flat.clone()))
            .collect::<Result<Vec<_>>>()?;
        NetworkParams::new(self.layer_specs.clone(), weights)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }
}
