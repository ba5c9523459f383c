use super::forward::{softmax_probs, ForwardTrace};
use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::DenseMatrix;

/// Gradients of the mean batch loss with respect to every weight matrix.
/// Dropout masks recorded in the trace are respected, so a masked-out node
/// contributes nothing to its incoming weights.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &[usize],
) -> Result<Vec<DenseMatrix>> {
    backward_with(params, trace, labels, None)
}

/// Backward pass with optional additive noise on each layer's
/// pre-activation gradient ("node loss"), used by disentanglement training.
pub(crate) fn backward_with(
    params: &NetworkParams,
    trace: &ForwardTrace,
    labels: &[usize],
    node_loss_noise: Option<&[Option<DenseMatrix>]>,
) -> Result<Vec<DenseMatrix>> {
    let layer_count = params.layer_count();
    if trace.layer_count() != layer_count {
        return Err(Error::StaleTrace(format!(
            "trace has {} layers, network has {layer_count}",
            trace.layer_count()
        )));
    }
    let batch = trace.batch_size();
    if labels.len() != batch {
        return Err(Error::StaleTrace(format!("{} labels for a trace of {batch}", labels.len())));
    }
    for (l, spec) in params.layers().iter().enumerate() {
        if trace.pre_activation(l).cols() != spec.out_dim
            || trace.layer_input(l).cols() != spec.in_dim
        {
            return Err(Error::StaleTrace(format!("trace shapes disagree at layer {l}")));
        }
    }
    if let Some(noise) = node_loss_noise {
        if noise.len() != layer_count {
            return Err(Error::ShapeMismatch("node-loss noise must cover every layer".into()));
        }
    }

    let scale = 1.0 / batch as f64;
    // output layer: d(mean loss)/dh_L = (softmax - onehot) / batch
    let logits = trace.pre_activation(layer_count - 1);
    let mut delta = softmax_probs(logits);
    for (i, &y) in labels.iter().enumerate() {
        if y >= delta.cols() {
            return Err(Error::StaleTrace(format!("label {y} out of range")));
        }
        delta[(i, y)] -= 1.0;
    }
    for v in delta.data_mut() {
        *v *= scale;
    }

    let mut grads: Vec<DenseMatrix> = vec![DenseMatrix::zeros(0, 0); layer_count];
    for l in (0..layer_count).rev() {
        if l < layer_count - 1 {
            // propagate through W_{l+1}, the mask, and the activation
            let mut upstream = delta.matmul(&params.weights()[l + 1]);
            if let Some(mask) = trace.masks().layer(l) {
                for (v, &m) in upstream.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
            }
            let spec = params.layers()[l];
            let h = trace.pre_activation(l);
            for (i, (v, &hv)) in upstream.data_mut().iter_mut().zip(h.data()).enumerate() {
                let _ = i;
                *v *= spec.activation.derivative(hv);
            }
            delta = upstream;
        }
        if let Some(noise) = node_loss_noise.and_then(|n| n[l].as_ref()) {
            if noise.rows() != batch || noise.cols() != delta.cols() {
                return Err(Error::ShapeMismatch(format!("node-loss noise shape at layer {l}")));
            }
            delta = delta.add(noise);
        }
        grads[l] = delta.tr_matmul(trace.layer_input(l));
    }
    Ok(grads)
}
