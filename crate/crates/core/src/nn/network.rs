use super::activation::Activation;
use super::{seeded_rng, RngStream};
use crate::error::{Error, Result};
use crate::DenseMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// One fully-connected layer: `out_dim x in_dim` weights, an activation, and
/// an inverted-dropout rate applied to this layer's activation output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, dropout_rate: f64) -> Self {
        Self { in_dim, out_dim, activation, dropout_rate }
    }

    /// Number of weights in this layer.
    pub fn weight_count(&self) -> usize {
        self.in_dim * self.out_dim
    }
}

/// Validates dimension chaining, dropout ranges, and softmax placement:
/// exactly the last layer is `softmax_output` and carries no dropout.
pub fn validate_layer_specs(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidSpec("network needs at least one layer".into()));
    }
    for (l, spec) in layers.iter().enumerate() {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(Error::InvalidSpec(format!("layer {l} has zero dimension")));
        }
        if !(0.0..1.0).contains(&spec.dropout_rate) {
            return Err(Error::InvalidSpec(format!(
                "layer {l} dropout rate {} outside [0, 1)",
                spec.dropout_rate
            )));
        }
        let is_last = l + 1 == layers.len();
        if is_last && spec.activation != Activation::SoftmaxOutput {
            return Err(Error::InvalidSpec("last layer must be softmax_output".into()));
        }
        if !is_last && spec.activation == Activation::SoftmaxOutput {
            return Err(Error::InvalidSpec(format!("layer {l} uses softmax_output before the end")));
        }
        if is_last && spec.dropout_rate != 0.0 {
            return Err(Error::InvalidSpec("softmax output layer cannot have dropout".into()));
        }
        if l > 0 && spec.in_dim != layers[l - 1].out_dim {
            return Err(Error::InvalidSpec(format!(
                "layer {l} expects {} inputs but previous layer emits {}",
                spec.in_dim,
                layers[l - 1].out_dim
            )));
        }
    }
    Ok(())
}

/// Convenience builder: hidden layers with one activation and a shared
/// dropout rate, closed by a softmax output layer.
pub fn mlp_layers(dims: &[usize], activation: Activation, dropout_rate: f64) -> Vec<LayerSpec> {
    assert!(dims.len() >= 2, "need at least input and output dims");
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        layers.push(LayerSpec::new(w[0], w[1], activation, dropout_rate));
    }
    let last = layers.last_mut().unwrap();
    last.activation = Activation::SoftmaxOutput;
    last.dropout_rate = 0.0;
    layers
}

/// Layered weight matrices plus their architecture description.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    weights: Vec<DenseMatrix>,
}

impl NetworkParams {
    pub fn new(layers: Vec<LayerSpec>, weights: Vec<DenseMatrix>) -> Result<Self> {
        validate_layer_specs(&layers)?;
        if weights.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers but {} weight matrices",
                layers.len(),
                weights.len()
            )));
        }
        for (l, (spec, w)) in layers.iter().zip(&weights).enumerate() {
            if w.rows() != spec.out_dim || w.cols() != spec.in_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l} weights are {}x{}, spec says {}x{}",
                    w.rows(),
                    w.cols(),
                    spec.out_dim,
                    spec.in_dim
                )));
            }
        }
        Ok(Self { layers, weights })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Total number of weights across layers.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::weight_count).sum()
    }

    /// Flattens layer `l` row-major.
    pub fn flatten_layer(&self, l: usize) -> Vec<f64> {
        self.weights[l].data().to_vec()
    }

    /// Adds `delta` (flattened row-major, all layers concatenated) in place.
    pub fn add_flat(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.weight_count(), "flat delta length mismatch");
        let mut offset = 0;
        for w in &mut self.weights {
            let n = w.data().len();
            for (v, d) in w.data_mut().iter_mut().zip(&delta[offset..offset + n]) {
                *v += d;
            }
            offset += n;
        }
    }
}

/// Seeded Kaiming-style initialization: entries drawn from
/// `N(0, 2/in_dim)` for relu layers and `N(0, 1/in_dim)` otherwise,
/// row-major per layer, so identical seeds give bit-identical weights.
pub fn init_network(layers: &[LayerSpec], seed: u64) -> Result<NetworkParams> {
    validate_layer_specs(layers)?;
    let mut rng = seeded_rng(seed, RngStream::Init);
    let mut weights = Vec::with_capacity(layers.len());
    for spec in layers {
        let std = spec.activation.init_variance(spec.in_dim).sqrt();
        let mut data = Vec::with_capacity(spec.weight_count());
        for _ in 0..spec.weight_count() {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(std * z);
        }
        weights.push(DenseMatrix::from_vec(spec.out_dim, spec.in_dim, data)?);
    }
    NetworkParams::new(layers.to_vec(), weights)
}
