use crate::config::encode_activation;
use std::collections::BTreeMap;
use std::path::Path;
use weightvol::analysis::ExperimentRecord;
use weightvol::measures::MeasureReport;
use weightvol::{Error, Result};

pub const RECORDS_HEADER: &str = "config_id,dropout_rate,batch_size,lr,depth,activation,weight_decay,width,seed,frob,spectral,param,path,sharp_alpha,pac_sharp,pac_s_laplace,pac_s_sampling,sigma,gg_loss,gg_acc";

/// One grid row: the hyperparameter assignment plus measures and gaps.
#[derive(Debug, Clone)]
pub struct RecordRow {
    pub config_id: String,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub depth: usize,
    pub activation: String,
    pub weight_decay: f64,
    pub width: f64,
    pub seed: u64,
    pub measures: MeasureReport,
    pub gg_loss: f64,
    pub gg_acc: f64,
}

impl RecordRow {
    pub fn to_csv_line(&self) -> String {
        let m = &self.measures;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.config_id,
            self.dropout_rate,
            self.batch_size,
            self.lr,
            self.depth,
            self.activation,
            self.weight_decay,
            self.width,
            self.seed,
            m.frob_distance,
            m.spectral_norm,
            m.parameter_norm,
            m.path_norm,
            m.sharpness_alpha,
            m.pac_sharpness,
            m.pac_s_laplace,
            m.pac_s_sampling,
            m.sigma,
            self.gg_loss,
            self.gg_acc
        )
    }

    pub fn from_csv_record(record: &csv::StringRecord) -> Result<Self> {
        if record.len() != 20 {
            return Err(Error::InvalidSpec(format!(
                "record row has {} fields, expected 20",
                record.len()
            )));
        }
        let f = |i: usize| -> Result<f64> {
            record[i]
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad number {:?} in column {i}", &record[i])))
        };
        let u = |i: usize| -> Result<usize> {
            record[i]
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad count {:?} in column {i}", &record[i])))
        };
        Ok(RecordRow {
            config_id: record[0].to_string(),
            dropout_rate: f(1)?,
            batch_size: u(2)?,
            lr: f(3)?,
            depth: u(4)?,
            activation: record[5].to_string(),
            weight_decay: f(6)?,
            width: f(7)?,
            seed: record[8]
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad seed {:?}", &record[8])))?,
            measures: MeasureReport {
                frob_distance: f(9)?,
                spectral_norm: f(10)?,
                parameter_norm: f(11)?,
                path_norm: f(12)?,
                sharpness_alpha: f(13)?,
                pac_sharpness: f(14)?,
                pac_s_laplace: f(15)?,
                pac_s_sampling: f(16)?,
                sigma: f(17)?,
                path_norm_exact: true,
            },
            gg_loss: f(18)?,
            gg_acc: f(19)?,
        })
    }

    /// Analysis record with the activation numerically encoded.
    pub fn to_experiment_record(&self) -> ExperimentRecord {
        let mut hyperparameters = BTreeMap::new();
        hyperparameters.insert("dropout_rate".to_string(), self.dropout_rate);
        hyperparameters.insert("batch_size".to_string(), self.batch_size as f64);
        hyperparameters.insert("lr".to_string(), self.lr);
        hyperparameters.insert("depth".to_string(), self.depth as f64);
        hyperparameters.insert("activation".to_string(), encode_activation(&self.activation));
        hyperparameters.insert("weight_decay".to_string(), self.weight_decay);
        hyperparameters.insert("width".to_string(), self.width);
        ExperimentRecord {
            config_id: self.config_id.clone(),
            hyperparameters,
            measures: self.measures.clone(),
            gg_loss: self.gg_loss,
            gg_acc: self.gg_acc,
        }
    }
}

pub fn write_records_csv(path: &Path, rows: &[RecordRow]) -> Result<()> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::InvalidSpec(format!(
        "cannot write {}: {e}",
        path.display()
    )))
}

pub fn read_records_csv(path: &Path) -> Result<Vec<RecordRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidSpec(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let expected: Vec<&str> = RECORDS_HEADER.split(',').collect();
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::InvalidSpec(format!("bad records header: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::InvalidSpec(format!("unexpected records header {got:?}")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::InvalidSpec(format!("bad records row: {e}")))?;
        rows.push(RecordRow::from_csv_record(&record)?);
    }
    Ok(rows)
}
