use super::network::NetworkParams;
use crate::error::{Error, Result};
use crate::DenseMatrix;

/// Per-layer momentum buffers, persisted across steps.
#[derive(Debug, Clone)]
pub struct MomentumState {
    velocity: Vec<DenseMatrix>,
}

impl MomentumState {
    pub fn zeros(params: &NetworkParams) -> Self {
        let velocity =
            params.weights().iter().map(|w| DenseMatrix::zeros(w.rows(), w.cols())).collect();
        Self { velocity }
    }
}

/// One SGD step with momentum and (decoupled-from-nothing, classic L2)
/// weight decay:
///
/// `v <- m * v + g + wd * W` then `W <- W - lr * v`.
pub fn sgd_step(
    params: &mut NetworkParams,
    grads: &[DenseMatrix],
    lr: f64,
    state: &mut MomentumState,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != params.layer_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradients for {} layers",
            grads.len(),
            params.layer_count()
        )));
    }
    for (l, grad) in grads.iter().enumerate() {
        let w = &mut params.weights_mut()[l];
        if grad.rows() != w.rows() || grad.cols() != w.cols() {
            return Err(Error::ShapeMismatch(format!("gradient shape at layer {l}")));
        }
        let v = &mut state.velocity[l];
        for ((vv, &g), wv) in v.data_mut().iter_mut().zip(grad.data()).zip(w.data_mut()) {
            *vv = momentum * *vv + g + weight_decay * *wv;
            *wv -= lr * *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{init_network, mlp_layers};
    use crate::nn::Activation;

    fn setup() -> (NetworkParams, Vec<DenseMatrix>) {
        let layers = mlp_layers(&[2, 2], Activation::Relu, 0.0);
        let params = init_network(&layers, 1).unwrap();
        let grads = vec![DenseMatrix::from_fn(2, 2, |i, j| (i + j) as f64 * 0.5 + 0.25)];
        (params, grads)
    }

    #[test]
    fn plain_step_is_w_minus_lr_g() {
        let (mut params, grads) = setup();
        let before = params.weights()[0].clone();
        let mut state = MomentumState::zeros(&params);
        sgd_step(&mut params, &grads, 0.1, &mut state, 0.0, 0.0).unwrap();
        let expected = before.sub(&grads[0].scale(0.1));
        assert!(params.weights()[0].sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn momentum_unrolls_to_one_point_nine_after_two_steps() {
        let (mut params, grads) = setup();
        let before = params.weights()[0].clone();
        let mut state = MomentumState::zeros(&params);
        sgd_step(&mut params, &grads, 0.1, &mut state, 0.9, 0.0).unwrap();
        let after_first = params.weights()[0].clone();
        sgd_step(&mut params, &grads, 0.1, &mut state, 0.9, 0.0).unwrap();
        // first update: lr*g; second: lr*(0.9*g + g) = 1.9*lr*g
        let first = before.sub(&after_first);
        let second = after_first.sub(&params.weights()[0]);
        assert!(second.sub(&first.scale(1.9)).max_abs() < 1e-15);
    }

    #[test]
    fn weight_decay_with_zero_gradient_shrinks_weights() {
        let (mut params, _) = setup();
        let before = params.weights()[0].clone();
        let zero = vec![DenseMatrix::zeros(2, 2)];
        let mut state = MomentumState::zeros(&params);
        sgd_step(&mut params, &zero, 0.1, &mut state, 0.0, 0.01).unwrap();
        let expected = before.scale(1.0 - 0.1 * 0.01);
        assert!(params.weights()[0].sub(&expected).max_abs() < 1e-15);
    }
}
