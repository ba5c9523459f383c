use super::dropout::DropoutMasks;
use super::network::NetworkParams;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::DenseMatrix;

/// Everything the backward pass and the curvature factors need from one
/// forward pass: per-layer pre-activations `h_l`, post-activations `a_l`
/// (after masks and any injected noise), and the masks that were applied.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: DenseMatrix,
    pre_activations: Vec<DenseMatrix>,
    activations: Vec<DenseMatrix>,
    masks: DropoutMasks,
    losses: Vec<f64>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.input.rows()
    }

    pub fn input(&self) -> &DenseMatrix {
        &self.input
    }

    /// `h_l` for layer `l` (batch x out_dim).
    pub fn pre_activation(&self, l: usize) -> &DenseMatrix {
        &self.pre_activations[l]
    }

    /// `a_l` after activation, mask, and noise (batch x out_dim).
    pub fn activation(&self, l: usize) -> &DenseMatrix {
        &self.activations[l]
    }

    /// Activation feeding layer `l` (the input for `l = 0`).
    pub fn layer_input(&self, l: usize) -> &DenseMatrix {
        if l == 0 {
            &self.input
        } else {
            &self.activations[l - 1]
        }
    }

    pub fn masks(&self) -> &DropoutMasks {
        &self.masks
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses.iter().sum::<f64>() / self.losses.len() as f64
    }

    pub(crate) fn layer_count(&self) -> usize {
        self.activations.len()
    }
}

/// Forward pass over a batch; `masks = None` is evaluation mode.
pub fn forward(
    params: &NetworkParams,
    inputs: &DenseMatrix,
    labels: &[usize],
    masks: Option<&DropoutMasks>,
) -> Result<ForwardTrace> {
    forward_with(params, inputs, labels, masks, None)
}

/// Forward pass with optional additive activation noise (one optional
/// batch-shaped matrix per layer), used by the disentanglement-noise
/// training loop.
pub(crate) fn forward_with(
    params: &NetworkParams,
    inputs: &DenseMatrix,
    labels: &[usize],
    masks: Option<&DropoutMasks>,
    activation_noise: Option<&[Option<DenseMatrix>]>,
) -> Result<ForwardTrace> {
    let batch = inputs.rows();
    if inputs.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch features have dim {}, network expects {}",
            inputs.cols(),
            params.input_dim()
        )));
    }
    if labels.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(m) = masks {
        if m.layer_count() != params.layer_count() || m.batch_size() != batch {
            return Err(Error::ShapeMismatch("dropout masks do not match batch/layers".into()));
        }
    }
    if let Some(noise) = activation_noise {
        if noise.len() != params.layer_count() {
            return Err(Error::ShapeMismatch("activation noise must cover every layer".into()));
        }
    }

    let layer_count = params.layer_count();
    let mut pre_activations = Vec::with_capacity(layer_count);
    let mut activations = Vec::with_capacity(layer_count);
    let mut current = inputs.clone();
    for (l, spec) in params.layers().iter().enumerate() {
        // h_l = a_{l-1} W_l^T, batch-major
        let h = current.matmul(&params.weights()[l].transpose());
        let mut a = DenseMatrix::from_fn(batch, spec.out_dim, |i, j| spec.activation.apply(h[(i, j)]));
        if let Some(noise) = activation_noise.and_then(|n| n[l].as_ref()) {
            if noise.rows() != batch || noise.cols() != spec.out_dim {
                return Err(Error::ShapeMismatch(format!("activation noise shape at layer {l}")));
            }
            a = a.add(noise);
        }
        if let Some(mask) = masks.and_then(|m| m.layer(l)) {
            for (v, &m) in a.data_mut().iter_mut().zip(mask.data()) {
                *v *= m;
            }
        }
        pre_activations.push(h);
        activations.push(a.clone());
        current = a;
    }

    let logits = pre_activations.last().expect("at least one layer");
    let losses = softmax_losses(logits, labels)?;
    Ok(ForwardTrace {
        input: inputs.clone(),
        pre_activations,
        activations,
        masks: masks.cloned().unwrap_or_else(|| DropoutMasks::identity(layer_count, batch)),
        losses,
    })
}

/// Per-sample softmax cross-entropy of logits against labels.
pub(crate) fn softmax_losses(logits: &DenseMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    let classes = logits.cols();
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= classes {
                return Err(Error::ShapeMismatch(format!("label {y} for {classes} classes")));
            }
            let row = logits.row(i);
            Ok(log_sum_exp(row) - row[y])
        })
        .collect()
}

/// Rowwise softmax probabilities of the logits.
pub(crate) fn softmax_probs(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..logits.rows() {
        let lse = log_sum_exp(logits.row(i));
        for v in out.row_mut(i) {
            *v = (*v - lse).exp();
        }
    }
    out
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// Copies the selected rows of a dataset into a batch matrix plus labels.
pub fn gather_batch(dataset: &Dataset, indices: &[usize]) -> (DenseMatrix, Vec<usize>) {
    let mut inputs = DenseMatrix::zeros(indices.len(), dataset.dim());
    let mut labels = Vec::with_capacity(indices.len());
    for (row, &idx) in indices.iter().enumerate() {
        inputs.row_mut(row).copy_from_slice(dataset.feature_row(idx));
        labels.push(dataset.label(idx));
    }
    (inputs, labels)
}

/// Mean cross-entropy and top-1 accuracy over a dataset, dropout disabled.
/// Chunked to bound memory; the reduction order is fixed for determinism.
pub fn evaluate(params: &NetworkParams, dataset: &Dataset) -> Result<(f64, f64)> {
    const CHUNK: usize = 512;
    let n = dataset.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (inputs, labels) = gather_batch(dataset, &indices);
        let trace = forward(params, &inputs, &labels, None)?;
        loss_sum += trace.losses().iter().sum::<f64>();
        let logits = trace.pre_activation(params.layer_count() - 1);
        for (i, &y) in labels.iter().enumerate() {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == y {
                correct += 1;
            }
        }
        start = end;
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}
