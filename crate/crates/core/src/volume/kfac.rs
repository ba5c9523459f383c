use super::{LayerVolume, VolumeMethod, VolumeReport};
use crate::data::Dataset;
use crate::error::Result;
use crate::linalg::cholesky_logdet;
use crate::nn::{forward, gather_batch, sample_dropout_masks, NetworkParams};
use crate::DenseMatrix;
use rand::Rng;

/// Curvature factors for one layer: the second moment of the layer's input
/// activations and the Gauss-Newton pre-activation Hessian, both averaged
/// over samples (and dropout masks when enabled) and damped.
#[derive(Debug, Clone)]
pub struct LayerFactors {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Damped `E[a_{l-1} a_{l-1}^T]` (in_dim x in_dim).
    pub input_factor: DenseMatrix,
    /// Damped Gauss-Newton `E[d2 loss / dh_l dh_l]` (out_dim x out_dim).
    pub preact_hessian: DenseMatrix,
    pub input_damping: f64,
    pub preact_damping: f64,
}

#[derive(Debug, Clone)]
pub struct KroneckerFactors {
    pub layers: Vec<LayerFactors>,
    pub damping_scale: f64,
    pub dropout_enabled: bool,
    pub mask_draws: usize,
}

const FACTOR_CHUNK: usize = 256;

/// Accumulates the per-layer Kronecker curvature factors over a dataset.
///
/// The input factor is the batched second moment of each layer's input; the
/// pre-activation factor follows the Gauss-Newton backward recursion from
/// the softmax output Hessian `diag(p) - p p^T`, sandwiching with
/// `diag(act'(h))` (mask included when dropout is active, since the mask is
/// part of the layer Jacobian). Dropping the activation-curvature term keeps
/// every factor PSD; it is exact for relu.
///
/// With `dropout_enabled`, each batch is averaged over `mask_draws` fresh
/// mask draws. Damping `damping_scale * mean(diag)` is added to both factors.
pub fn kfac_factors<R: Rng>(
    params: &NetworkParams,
    dataset: &Dataset,
    dropout_enabled: bool,
    mask_draws: usize,
    damping_scale: f64,
    rng: &mut R,
) -> Result<KroneckerFactors> {
    let layer_count = params.layer_count();
    let specs = params.layers();
    let use_masks = dropout_enabled && specs.iter().any(|l| l.dropout_rate > 0.0);
    let draws = if use_masks { mask_draws.max(1) } else { 1 };

    let mut input_sums: Vec<DenseMatrix> =
        specs.iter().map(|s| DenseMatrix::zeros(s.in_dim, s.in_dim)).collect();
    let mut hess_sums: Vec<DenseMatrix> =
        specs.iter().map(|s| DenseMatrix::zeros(s.out_dim, s.out_dim)).collect();
    let mut weight_total = 0.0f64;

    let n = dataset.len();
    let mut start = 0;
    while start < n {
        let end = (start + FACTOR_CHUNK).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (inputs, labels) = gather_batch(dataset, &indices);
        for _ in 0..draws {
            let masks = use_masks
                .then(|| sample_dropout_masks(specs, indices.len(), rng));
            let trace = forward(params, &inputs, &labels, masks.as_ref())?;
            for l in 0..layer_count {
                let a_in = trace.layer_input(l);
                input_sums[l] = input_sums[l].add(&a_in.tr_matmul(a_in));
            }
            accumulate_gauss_newton(params, &trace, &mut hess_sums);
        }
        weight_total += (indices.len() * draws) as f64;
        start = end;
    }

    let scale = 1.0 / weight_total;
    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let input_factor = input_sums[l].scale(scale);
        let preact = hess_sums[l].scale(scale);
        let (input_factor, input_damping) = damp(&input_factor, damping_scale);
        let (preact, preact_damping) = damp(&preact, damping_scale);
        layers.push(LayerFactors {
            in_dim: specs[l].in_dim,
            out_dim: specs[l].out_dim,
            input_factor,
            preact_hessian: preact,
            input_damping,
            preact_damping,
        });
    }
    Ok(KroneckerFactors { layers, damping_scale, dropout_enabled: use_masks, mask_draws: draws })
}

/// Adds the per-sample Gauss-Newton pre-activation Hessians of one traced
/// batch into `sums`. Output layer: `diag(p) - p p^T`; below that
/// `H_{l-1} = B W_l^T H_l W_l B` with `B = diag(act'(h) * mask)`.
fn accumulate_gauss_newton(
    params: &NetworkParams,
    trace: &crate::nn::ForwardTrace,
    sums: &mut [DenseMatrix],
) {
    let layer_count = params.layer_count();
    let batch = trace.batch_size();
    let logits = trace.pre_activation(layer_count - 1);
    let probs = softmax_rows(logits);

    for s in 0..batch {
        let p = probs.row(s);
        let k = p.len();
        let mut h = DenseMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                h[(i, j)] = if i == j { p[i] * (1.0 - p[i]) } else { -p[i] * p[j] };
            }
        }
        sums[layer_count - 1] = sums[layer_count - 1].add(&h);

        let mut current = h;
        for l in (1..layer_count).rev() {
            let w = &params.weights()[l];
            let spec = params.layers()[l - 1];
            // b = act'(h_{l-1}) elementwise, times the mask when present
            let pre = trace.pre_activation(l - 1);
            let mut b: Vec<f64> =
                (0..spec.out_dim).map(|j| spec.activation.derivative(pre[(s, j)])).collect();
            if let Some(mask) = trace.masks().layer(l - 1) {
                for (bv, j) in b.iter_mut().zip(0..spec.out_dim) {
                    *bv *= mask[(s, j)];
                }
            }
            // W^T H W, then sandwich by diag(b)
            let wt_h = w.tr_matmul(&current.matmul(w));
            let mut down = wt_h;
            for i in 0..spec.out_dim {
                for j in 0..spec.out_dim {
                    down[(i, j)] *= b[i] * b[j];
                }
            }
            sums[l - 1] = sums[l - 1].add(&down);
            current = down;
        }
    }
}

/// Batch means of the per-sample Gauss-Newton node Hessians, one matrix per
/// layer. Shared with the disentanglement-noise factor estimates.
pub(crate) fn gauss_newton_batch_means(
    params: &NetworkParams,
    trace: &crate::nn::ForwardTrace,
) -> Vec<DenseMatrix> {
    let mut sums: Vec<DenseMatrix> =
        params.layers().iter().map(|s| DenseMatrix::zeros(s.out_dim, s.out_dim)).collect();
    accumulate_gauss_newton(params, trace, &mut sums);
    let scale = 1.0 / trace.batch_size() as f64;
    sums.into_iter().map(|m| m.scale(scale)).collect()
}

fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..logits.rows() {
        let row = out.row_mut(i);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

fn damp(factor: &DenseMatrix, damping_scale: f64) -> (DenseMatrix, f64) {
    let n = factor.rows();
    let mean_diag = factor.diag().iter().sum::<f64>() / n as f64;
    // fall back to an absolute floor when the factor is numerically zero
    let lambda = (damping_scale * mean_diag).max(1e-12);
    let mut out = factor.clone();
    for i in 0..n {
        out[(i, i)] += lambda;
    }
    (out, lambda)
}

/// Log-determinant and log-diagonal-product of the implied layer covariance
/// `Sigma_l = A^{-1} (kron) H^{-1}`, computed from the factor Cholesky
/// decompositions without ever forming the Kronecker product.
#[derive(Debug, Clone, Copy)]
pub struct LaplaceLayerDetail {
    pub layer: usize,
    pub dim: usize,
    /// `log det Sigma_l = -(N_l log det A + N_{l-1} log det H)`.
    pub log_det_sigma: f64,
    /// `log prod_i [Sigma_l]_ii` via the factor inverse diagonals.
    pub log_prod_diag: f64,
}

pub fn laplace_layer_details(factors: &KroneckerFactors) -> Result<Vec<LaplaceLayerDetail>> {
    factors
        .layers
        .iter()
        .enumerate()
        .map(|(l, lf)| {
            let fa = cholesky_logdet(&lf.input_factor)?;
            let fh = cholesky_logdet(&lf.preact_hessian)?;
            let n_in = lf.in_dim as f64;
            let n_out = lf.out_dim as f64;
            let log_det_sigma = -(n_out * fa.log_det() + n_in * fh.log_det());
            let a_inv_diag = fa.inverse().diag();
            let h_inv_diag = fh.inverse().diag();
            let log_prod_diag = n_out * a_inv_diag.iter().map(|&v| v.ln()).sum::<f64>()
                + n_in * h_inv_diag.iter().map(|&v| v.ln()).sum::<f64>();
            Ok(LaplaceLayerDetail {
                layer: l,
                dim: lf.in_dim * lf.out_dim,
                log_det_sigma,
                log_prod_diag,
            })
        })
        .collect()
}

/// Weight volume of every layer from the damped Kronecker factors.
pub fn laplace_volume(factors: &KroneckerFactors) -> Result<VolumeReport> {
    let per_layer = laplace_layer_details(factors)?
        .into_iter()
        .map(|d| {
            let log_vol = (d.log_det_sigma - d.log_prod_diag).min(0.0);
            LayerVolume {
                layer: d.layer,
                dim: d.dim,
                log_vol,
                per_dim_vol: (log_vol / d.dim as f64).exp(),
                k: None,
                r: None,
            }
        })
        .collect();
    let report =
        VolumeReport { method: VolumeMethod::Laplace, damping: factors.damping_scale, per_layer };
    report.validate()?;
    Ok(report)
}
