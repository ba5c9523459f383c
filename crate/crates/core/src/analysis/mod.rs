//! Statistical harness: normalized and conditional mutual information
//! between complexity measures and generalization gap / dropout, average
//! sign-error, gradient-update correlation probes, and Monte-Carlo
//! verification of the dropout covariance/correlation algebra.

mod gradcorr;
mod lemma_mc;
mod mi;

pub use gradcorr::{gradient_update_correlation, CorrelationProbe, GradCorrReport, ProbeSettings};
pub use lemma_mc::{lemma2_montecarlo, Lemma2Params, Lemma2Report};
pub use mi::{average_sign_error, conditional_mi_expectation, normalized_mi, sign3, SIGN_TIE_TOL};

use crate::error::{Error, Result};
use crate::measures::{MeasureReport, MEASURE_KEYS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Hyperparameter names every record carries, in canonical order.
/// `activation` is numerically encoded (relu = 0, tanh = 1).
pub const HYPERPARAM_REGISTRY: [&str; 7] =
    ["dropout_rate", "batch_size", "lr", "depth", "activation", "weight_decay", "width"];

/// Conditioning registry for the conditional-MI expectation: every
/// hyperparameter except the dropout rate, which is the co-target.
pub fn conditioning_registry() -> Vec<String> {
    HYPERPARAM_REGISTRY.iter().filter(|&&h| h != "dropout_rate").map(|&h| h.to_string()).collect()
}

/// One trained grid cell: hyperparameter assignment, measure values, and the
/// generalization gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config_id: String,
    pub hyperparameters: BTreeMap<String, f64>,
    pub measures: MeasureReport,
    pub gg_loss: f64,
    pub gg_acc: f64,
}

impl ExperimentRecord {
    /// Numeric value behind a column key: a measure, a hyperparameter, or a
    /// generalization-gap field.
    pub fn value(&self, key: &str) -> Option<f64> {
        match key {
            "gg_loss" => Some(self.gg_loss),
            "gg_acc" => Some(self.gg_acc),
            _ => self.measures.value(key).or_else(|| self.hyperparameters.get(key).copied()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gg_loss.is_finite() || !self.gg_acc.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "record {} has non-finite generalization gap",
                self.config_id
            )));
        }
        for name in HYPERPARAM_REGISTRY {
            if !self.hyperparameters.contains_key(name) {
                return Err(Error::InvalidSpec(format!(
                    "record {} is missing hyperparameter {name}",
                    self.config_id
                )));
            }
        }
        Ok(())
    }
}

/// One measure's row in the mutual-information report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIRow {
    pub measure: String,
    pub mi_dropout: f64,
    pub mi_gg_w0: f64,
    pub mi_gg_w1: f64,
    pub mi_gg_w2: f64,
    pub sign_error: f64,
}

/// Normalized MI of every measure against dropout and the generalization
/// gap (conditioning on 0, 1, 2 fixed hyperparameters), plus sign-errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIReport {
    pub rows: Vec<MIRow>,
    pub record_count: usize,
}

impl MIReport {
    pub fn row(&self, measure: &str) -> Option<&MIRow> {
        self.rows.iter().find(|r| r.measure == measure)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("measure,MI_dropout,MI_GG_w0,MI_GG_w1,MI_GG_w2,sign_error\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.measure, r.mi_dropout, r.mi_gg_w0, r.mi_gg_w1, r.mi_gg_w2, r.sign_error
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Full Table-style analysis over a set of records.
pub fn analyze_records(records: &[ExperimentRecord], registry: &[String]) -> Result<MIReport> {
    if records.len() < 2 {
        return Err(Error::InvalidSpec(format!(
            "analysis needs at least 2 records, got {}",
            records.len()
        )));
    }
    for r in records {
        r.validate()?;
    }
    let rows = MEASURE_KEYS
        .iter()
        .map(|&measure| {
            let mi_dropout = normalized_mi(records, measure, "dropout_rate")?;
            let mi_gg_w0 = conditional_mi_expectation(records, measure, "gg_loss", registry, 0)?;
            let mi_gg_w1 = conditional_mi_expectation(records, measure, "gg_loss", registry, 1)?;
            let mi_gg_w2 = conditional_mi_expectation(records, measure, "gg_loss", registry, 2)?;
            let sign_error = average_sign_error(records, measure)?;
            Ok(MIRow {
                measure: measure.to_string(),
                mi_dropout,
                mi_gg_w0,
                mi_gg_w1,
                mi_gg_w2,
                sign_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MIReport { rows, record_count: records.len() })
}

#[cfg(test)]
pub(crate) fn test_record(
    id: &str,
    hyper: &[(&str, f64)],
    measure_value: f64,
    gg_loss: f64,
) -> ExperimentRecord {
    let mut hyperparameters: BTreeMap<String, f64> =
        HYPERPARAM_REGISTRY.iter().map(|&k| (k.to_string(), 0.0)).collect();
    for (k, v) in hyper {
        hyperparameters.insert((*k).to_string(), *v);
    }
    // every measure column carries the same value so tests can probe any key
    let measures = MeasureReport {
        frob_distance: measure_value,
        spectral_norm: measure_value,
        parameter_norm: measure_value,
        path_norm: measure_value,
        sharpness_alpha: measure_value,
        pac_sharpness: measure_value,
        pac_s_laplace: measure_value,
        pac_s_sampling: measure_value,
        sigma: 0.1,
        path_norm_exact: true,
    };
    ExperimentRecord {
        config_id: id.to_string(),
        hyperparameters,
        measures,
        gg_loss,
        gg_acc: -gg_loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analyze_produces_a_row_per_measure() {
        let records: Vec<ExperimentRecord> = (0..8)
            .map(|i| {
                test_record(
                    &format!("c{i}"),
                    &[("dropout_rate", (i % 2) as f64 * 0.3), ("depth", (i / 4) as f64)],
                    i as f64,
                    (8 - i) as f64 * 0.1,
                )
            })
            .collect();
        let report = analyze_records(&records, &conditioning_registry()).unwrap();
        assert_eq!(report.rows.len(), MEASURE_KEYS.len());
        assert_eq!(report.record_count, 8);
        let csv = report.to_csv();
        assert!(csv.starts_with("measure,MI_dropout,MI_GG_w0,MI_GG_w1,MI_GG_w2,sign_error\n"));
        assert_eq!(csv.lines().count(), MEASURE_KEYS.len() + 1);
        for row in &report.rows {
            for v in [row.mi_dropout, row.mi_gg_w0, row.mi_gg_w1, row.mi_gg_w2] {
                assert!((-1e-12..=1.0 + 1e-12).contains(&v), "MI {v} outside [0,1]");
            }
            assert!((0.0..=1.0).contains(&row.sign_error));
        }
    }

    #[test]
    fn single_record_analysis_is_rejected() {
        let records = vec![test_record("only", &[], 1.0, 0.5)];
        assert!(analyze_records(&records, &conditioning_registry()).is_err());
    }
}
