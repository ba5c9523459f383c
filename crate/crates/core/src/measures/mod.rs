//! Complexity measures for trained networks: norm- and sharpness-based
//! baselines plus the volume-aware PAC-Bayes scores built from the two
//! weight-volume estimators.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::nn::{evaluate, Activation, NetworkParams};
use crate::volume::VolumeReport;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

const SIGMA_LOWER: f64 = 1e-4;
const SIGMA_UPPER: f64 = 1.0;
const SEARCH_ITERS: usize = 20;
const SPECTRAL_ITERS: usize = 300;
/// Loss deviations are estimated on at most this many samples.
const EVAL_SUBSET: usize = 512;

/// Result of the sharpness sigma search: the largest isotropic perturbation
/// scale whose worst observed loss deviation stays within epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessResult {
    pub sigma: f64,
    pub epsilon: f64,
    pub mc_draws: usize,
    pub search_iterations: usize,
}

/// Binary search on log sigma against an arbitrary deviation estimate.
/// Maintains `deviation(lo) <= epsilon < deviation(hi)` and returns the
/// accepted lower endpoint.
pub(crate) fn sigma_search(
    mut deviation: impl FnMut(f64) -> Result<f64>,
    epsilon: f64,
    mc_draws: usize,
) -> Result<SharpnessResult> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidSpec("sharpness epsilon must be positive".into()));
    }
    let dev_lo = deviation(SIGMA_LOWER)?;
    if dev_lo > epsilon {
        return Err(Error::OutOfRange { sigma: SIGMA_LOWER, deviation: dev_lo, epsilon });
    }
    if deviation(SIGMA_UPPER)? <= epsilon {
        return Ok(SharpnessResult {
            sigma: SIGMA_UPPER,
            epsilon,
            mc_draws,
            search_iterations: 0,
        });
    }
    let mut lo = SIGMA_LOWER;
    let mut hi = SIGMA_UPPER;
    for _ in 0..SEARCH_ITERS {
        let mid = (lo.ln() + hi.ln()).mul_add(0.5, 0.0).exp();
        if deviation(mid)? <= epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SharpnessResult { sigma: lo, epsilon, mc_draws, search_iterations: SEARCH_ITERS })
}

/// Sharpness sigma of a trained network: deviation at scale sigma is the max
/// over `mc_draws` perturbations `vec(U) ~ N(0, sigma^2 I)` of
/// `|L(f_{W+U}) - L(f_W)|` on a fixed evaluation subset.
pub fn sharpness_sigma<R: Rng>(
    params: &NetworkParams,
    dataset: &Dataset,
    epsilon: f64,
    mc_draws: usize,
    rng: &mut R,
) -> Result<SharpnessResult> {
    let subset = if dataset.len() > EVAL_SUBSET {
        dataset.split_at(EVAL_SUBSET).0
    } else {
        dataset.clone()
    };
    let (base_loss, _) = evaluate(params, &subset)?;
    let weight_count = params.weight_count();
    let draws = mc_draws.max(1);
    let mut deviation = |sigma: f64| -> Result<f64> {
        let mut worst = 0.0f64;
        for _ in 0..draws {
            let mut perturbed = params.clone();
            let noise: Vec<f64> = (0..weight_count)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sigma * z
                })
                .collect();
            perturbed.add_flat(&noise);
            let (loss, _) = evaluate(&perturbed, &subset)?;
            worst = worst.max((loss - base_loss).abs());
        }
        Ok(worst)
    };
    sigma_search(&mut deviation, epsilon, draws)
}

/// Path norm: square every weight, push an all-ones input through the
/// squared network with identity activations, and sum the outputs.
///
/// With the all-ones (hence non-negative) signal this equals the sum over
/// all input-output paths of the squared weight products, which is exact for
/// relu networks; for tanh it is the same convention applied heuristically
/// (flagged in the measure report).
pub fn path_norm(params: &NetworkParams) -> f64 {
    let mut signal = vec![1.0f64; params.input_dim()];
    for w in params.weights() {
        let mut next = vec![0.0f64; w.rows()];
        for (i, nv) in next.iter_mut().enumerate() {
            let row = w.row(i);
            *nv = row.iter().zip(&signal).map(|(&wij, &s)| wij * wij * s).sum();
        }
        signal = next;
    }
    signal.iter().sum()
}

/// All complexity measures for one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub frob_distance: f64,
    pub spectral_norm: f64,
    pub parameter_norm: f64,
    pub path_norm: f64,
    pub sharpness_alpha: f64,
    pub pac_sharpness: f64,
    pub pac_s_laplace: f64,
    pub pac_s_sampling: f64,
    pub sigma: f64,
    /// Path norm is exact for relu networks, heuristic for tanh.
    pub path_norm_exact: bool,
}

impl MeasureReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Value of the given measure column (CSV naming).
    pub fn value(&self, key: &str) -> Option<f64> {
        match key {
            "frob" => Some(self.frob_distance),
            "spectral" => Some(self.spectral_norm),
            "param" => Some(self.parameter_norm),
            "path" => Some(self.path_norm),
            "sharp_alpha" => Some(self.sharpness_alpha),
            "pac_sharp" => Some(self.pac_sharpness),
            "pac_s_laplace" => Some(self.pac_s_laplace),
            "pac_s_sampling" => Some(self.pac_s_sampling),
            _ => None,
        }
    }
}

/// Measure column names in canonical CSV order.
pub const MEASURE_KEYS: [&str; 8] = [
    "frob",
    "spectral",
    "param",
    "path",
    "sharp_alpha",
    "pac_sharp",
    "pac_s_laplace",
    "pac_s_sampling",
];

pub fn measures_csv_header() -> String {
    "config_id,frob,spectral,param,path,sharp_alpha,pac_sharp,pac_s_laplace,pac_s_sampling,sigma,gg_loss,gg_acc".to_string()
}

pub fn measures_csv_row(
    config_id: &str,
    report: &MeasureReport,
    gg_loss: f64,
    gg_acc: f64,
) -> String {
    format!(
        "{config_id},{},{},{},{},{},{},{},{},{},{gg_loss},{gg_acc}",
        report.frob_distance,
        report.spectral_norm,
        report.parameter_norm,
        report.path_norm,
        report.sharpness_alpha,
        report.pac_sharpness,
        report.pac_s_laplace,
        report.pac_s_sampling,
        report.sigma,
    )
}

/// Computes every measure from the trained/initial snapshots, the shared
/// sharpness sigma, and the two volume reports.
///
/// The PAC scores use one global sigma for every layer:
/// `pac_sharpness = sum_l ||W_l^F - W_l^0||_F^2 / (2 sigma^2)` and
/// `pac_s_* = pac_sharpness + sum_l ln(1 / vol_l)` with the full per-layer
/// log-volumes from the respective estimator.
pub fn complexity_measures(
    final_params: &NetworkParams,
    initial_params: &NetworkParams,
    sharpness: &SharpnessResult,
    vol_laplace: &VolumeReport,
    vol_sampling: &VolumeReport,
) -> Result<MeasureReport> {
    if final_params.layer_count() != initial_params.layer_count() {
        return Err(Error::ShapeMismatch("final/initial layer counts differ".into()));
    }
    let layer_count = final_params.layer_count();
    let mut frob = 0.0;
    let mut spectral = 0.0;
    let mut param = 0.0;
    for l in 0..layer_count {
        let wf = &final_params.weights()[l];
        let w0 = &initial_params.weights()[l];
        if wf.rows() != w0.rows() || wf.cols() != w0.cols() {
            return Err(Error::ShapeMismatch(format!("layer {l} shapes differ")));
        }
        let delta = wf.sub(w0);
        frob += delta.frobenius_norm().powi(2);
        spectral += spectral_norm(&delta, SPECTRAL_ITERS).powi(2);
        param += wf.frobenius_norm().powi(2);
    }

    let volume_term = |report: &VolumeReport, method: &str| -> Result<f64> {
        let mut total = 0.0;
        for l in 0..layer_count {
            let lv = report
                .layer(l)
                .ok_or_else(|| Error::MissingVolume { layer: l, method: method.into() })?;
            if lv.dim != final_params.layers()[l].weight_count() {
                return Err(Error::MissingVolume { layer: l, method: method.into() });
            }
            // ln(1/vol) = -log_vol >= 0
            total -= lv.log_vol;
        }
        Ok(total)
    };

    let sigma = sharpness.sigma;
    let pac_sharpness = frob / (2.0 * sigma * sigma);
    let pac_s_laplace = pac_sharpness + volume_term(vol_laplace, "laplace")?;
    let pac_s_sampling = pac_sharpness + volume_term(vol_sampling, "sampling")?;
    let path_norm_exact =
        final_params.layers().iter().all(|l| l.activation != Activation::Tanh);

    Ok(MeasureReport {
        frob_distance: frob,
        spectral_norm: spectral,
        parameter_norm: param,
        path_norm: path_norm(final_params),
        sharpness_alpha: 1.0 / (sigma * sigma),
        pac_sharpness,
        pac_s_laplace,
        pac_s_sampling,
        sigma,
        path_norm_exact,
    })
}
