use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Parameters of the dropout-algebra Monte Carlo: gradient updates for two
/// weights in distinct units are drawn bivariate-Gaussian with the given
/// means, variances, and correlation, then independently dropout-scaled.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Lemma2Params {
    pub rho: f64,
    pub mean: (f64, f64),
    pub variance: (f64, f64),
    pub dropout_rate: f64,
    pub n_draws: usize,
}

/// Estimates and 4-standard-error verdicts for the covariance-preservation,
/// variance-inflation, and correlation-bound identities of dropout-scaled
/// updates, plus the updated-weight correlation bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub params: Lemma2Params,
    /// Cov of the dropout-scaled pair vs the plain covariance.
    pub cov_preserved: bool,
    pub cov_estimate: f64,
    pub cov_expected: f64,
    /// Var of a dropout-scaled update vs `var/(1-q) + q mu^2/(1-q)`.
    pub var_formula: bool,
    pub var_estimate: f64,
    pub var_expected: f64,
    /// `|corr(scaled pair)| <= (1-q) |rho|` within tolerance.
    pub corr_bound: bool,
    pub corr_estimate: f64,
    pub corr_bound_value: f64,
    /// `|corr(w + scaled)| <= |corr(w + plain)|` within tolerance.
    pub weight_corr_bound: bool,
    pub weight_corr_noisy: f64,
    pub weight_corr_plain: f64,
}

impl Lemma2Report {
    pub fn all_pass(&self) -> bool {
        self.cov_preserved && self.var_formula && self.corr_bound && self.weight_corr_bound
    }
}

const BATCHES: usize = 100;
/// Correlation of the baseline weight pair in the updated-weight check.
const WEIGHT_RHO: f64 = 0.5;

struct BatchStats {
    cov: f64,
    var1: f64,
    corr: f64,
    weight_corr_noisy: f64,
    weight_corr_plain: f64,
}

/// Monte-Carlo verification of the dropout update algebra.
///
/// Per draw: `(d1, d2)` is a correlated Gaussian update pair; `(d1', d2')`
/// an i.i.d. copy; independent inverted-dropout masks `m1, m2` (distinct
/// units) scale the copy to `(t1, t2)`. Batch means over 100 batches give
/// standard errors; each check passes within 4 SE.
pub fn lemma2_montecarlo<R: Rng>(params: &Lemma2Params, rng: &mut R) -> Result<Lemma2Report> {
    let Lemma2Params { rho, mean, variance, dropout_rate: q, n_draws } = *params;
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!("|rho| must be < 1, got {rho}")));
    }
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidSpec(format!("dropout rate {q} outside [0, 1)")));
    }
    if n_draws < BATCHES * 10 {
        return Err(Error::InvalidSpec(format!("n_draws {n_draws} too small")));
    }
    let per_batch = n_draws / BATCHES;
    let (s1, s2) = (variance.0.sqrt(), variance.1.sqrt());
    let keep_scale = 1.0 / (1.0 - q);
    let w_cross = (1.0 - WEIGHT_RHO * WEIGHT_RHO).sqrt();
    let rho_cross = (1.0 - rho * rho).sqrt();

    let mut batches = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let mut acc = Accumulator::default();
        for _ in 0..per_batch {
            let correlated_pair = |r: &mut R, m1: f64, m2: f64, sd1: f64, sd2: f64, c: f64, cc: f64| {
                let z1: f64 = StandardNormal.sample(r);
                let z2: f64 = StandardNormal.sample(r);
                (m1 + sd1 * z1, m2 + sd2 * (c * z1 + cc * z2))
            };
            let (d1, d2) = correlated_pair(rng, mean.0, mean.1, s1, s2, rho, rho_cross);
            let (d1p, d2p) = correlated_pair(rng, mean.0, mean.1, s1, s2, rho, rho_cross);
            let m1 = if rng.gen::<f64>() < q { 0.0 } else { keep_scale };
            let m2 = if rng.gen::<f64>() < q { 0.0 } else { keep_scale };
            let (t1, t2) = (m1 * d1p, m2 * d2p);
            let (w1, w2) = correlated_pair(rng, 0.0, 0.0, 1.0, 1.0, WEIGHT_RHO, w_cross);
            acc.push(d1, d2, t1, t2, w1, w2);
        }
        batches.push(acc.finish());
    }

    let (cov_mean, cov_se) = mean_se(batches.iter().map(|b| b.cov));
    let (var_mean, var_se) = mean_se(batches.iter().map(|b| b.var1));
    let (corr_mean, corr_se) = mean_se(batches.iter().map(|b| b.corr));
    let (wn_mean, _) = mean_se(batches.iter().map(|b| b.weight_corr_noisy));
    let (wp_mean, _) = mean_se(batches.iter().map(|b| b.weight_corr_plain));
    let (wdiff_mean, wdiff_se) =
        mean_se(batches.iter().map(|b| b.weight_corr_noisy.abs() - b.weight_corr_plain.abs()));

    let cov_expected = rho * s1 * s2;
    let var_expected = variance.0 / (1.0 - q) + q * mean.0 * mean.0 / (1.0 - q);
    let corr_bound_value = (1.0 - q) * rho.abs();

    Ok(Lemma2Report {
        params: *params,
        cov_preserved: (cov_mean - cov_expected).abs() <= 4.0 * cov_se,
        cov_estimate: cov_mean,
        cov_expected,
        var_formula: (var_mean - var_expected).abs() <= 4.0 * var_se,
        var_estimate: var_mean,
        var_expected,
        corr_bound: corr_mean.abs() <= corr_bound_value + 4.0 * corr_se,
        corr_estimate: corr_mean,
        corr_bound_value,
        weight_corr_bound: wdiff_mean <= 4.0 * wdiff_se,
        weight_corr_noisy: wn_mean,
        weight_corr_plain: wp_mean,
    })
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    sum_d: [f64; 2],
    sum_t: [f64; 2],
    sum_tt: f64,
    sum_t_sq: [f64; 2],
    sum_wn: [f64; 2],
    sum_wn_sq: [f64; 2],
    sum_wn_cross: f64,
    sum_wp: [f64; 2],
    sum_wp_sq: [f64; 2],
    sum_wp_cross: f64,
}

impl Accumulator {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, d1: f64, d2: f64, t1: f64, t2: f64, w1: f64, w2: f64) {
        self.n += 1;
        self.sum_d[0] += d1;
        self.sum_d[1] += d2;
        self.sum_t[0] += t1;
        self.sum_t[1] += t2;
        self.sum_tt += t1 * t2;
        self.sum_t_sq[0] += t1 * t1;
        self.sum_t_sq[1] += t2 * t2;
        let (a, b) = (w1 + t1, w2 + t2);
        self.sum_wn[0] += a;
        self.sum_wn[1] += b;
        self.sum_wn_sq[0] += a * a;
        self.sum_wn_sq[1] += b * b;
        self.sum_wn_cross += a * b;
        let (a, b) = (w1 + d1, w2 + d2);
        self.sum_wp[0] += a;
        self.sum_wp[1] += b;
        self.sum_wp_sq[0] += a * a;
        self.sum_wp_sq[1] += b * b;
        self.sum_wp_cross += a * b;
    }

    fn finish(self) -> BatchStats {
        let n = self.n as f64;
        let mt = [self.sum_t[0] / n, self.sum_t[1] / n];
        let cov = self.sum_tt / n - mt[0] * mt[1];
        let var1 = self.sum_t_sq[0] / n - mt[0] * mt[0];
        let var2 = self.sum_t_sq[1] / n - mt[1] * mt[1];
        let corr = cov / (var1 * var2).sqrt().max(1e-300);
        let corr_of = |sum: [f64; 2], sum_sq: [f64; 2], cross: f64| {
            let m = [sum[0] / n, sum[1] / n];
            let c = cross / n - m[0] * m[1];
            let v1 = sum_sq[0] / n - m[0] * m[0];
            let v2 = sum_sq[1] / n - m[1] * m[1];
            c / (v1 * v2).sqrt().max(1e-300)
        };
        BatchStats {
            cov,
            var1,
            corr,
            weight_corr_noisy: corr_of(self.sum_wn, self.sum_wn_sq, self.sum_wn_cross),
            weight_corr_plain: corr_of(self.sum_wp, self.sum_wp_sq, self.sum_wp_cross),
        }
    }
}

fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(rho: f64, mu: f64, q: f64, n: usize, seed: u64) -> Lemma2Report {
        let params = Lemma2Params {
            rho,
            mean: (mu, mu),
            variance: (1.0, 1.0),
            dropout_rate: q,
            n_draws: n,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        lemma2_montecarlo(&params, &mut rng).unwrap()
    }

    #[test]
    fn no_dropout_passes_with_equality() {
        let report = run(0.6, 0.5, 0.0, 200_000, 1);
        assert!(report.all_pass(), "{report:?}");
        assert!((report.var_estimate - 1.0).abs() < 0.05);
        assert!((report.corr_estimate - 0.6).abs() < 0.05);
    }

    #[test]
    fn uncorrelated_updates_have_zero_bound() {
        let report = run(0.0, 0.5, 0.3, 200_000, 2);
        assert!(report.all_pass(), "{report:?}");
        assert!(report.corr_estimate.abs() < 0.05);
        assert_eq!(report.corr_bound_value, 0.0);
    }

    #[test]
    fn worked_example_matches_hand_numbers() {
        // rho = 0.6, mu = 0.5, var = 1, q = 0.5:
        // Var(scaled) = 1/0.5 + 0.5 * 0.25 / 0.5 = 2.25
        // corr = 0.6 / 2.25 ~ 0.2667 <= 0.3
        let report = run(0.6, 0.5, 0.5, 400_000, 3);
        assert!(report.all_pass(), "{report:?}");
        assert!((report.var_expected - 2.25).abs() < 1e-12);
        assert!((report.var_estimate - 2.25).abs() < 0.08);
        assert!((report.corr_estimate - 0.6 / 2.25).abs() < 0.03);
        assert!((report.corr_bound_value - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad_rho = Lemma2Params {
            rho: 1.0,
            mean: (0.0, 0.0),
            variance: (1.0, 1.0),
            dropout_rate: 0.2,
            n_draws: 10_000,
        };
        assert!(lemma2_montecarlo(&bad_rho, &mut rng).is_err());
        let bad_q = Lemma2Params { rho: 0.5, dropout_rate: 1.0, ..bad_rho };
        assert!(lemma2_montecarlo(&bad_q, &mut rng).is_err());
    }
}
