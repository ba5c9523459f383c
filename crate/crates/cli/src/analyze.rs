use crate::records::read_records_csv;
use std::path::Path;
use weightvol::analysis::{analyze_records, conditioning_registry, MIReport};
use weightvol::{Error, Result};

/// Reads a records CSV and writes the MI/sign-error report as CSV and JSON.
pub fn analyze(records_path: &Path, out_dir: &Path) -> Result<MIReport> {
    let rows = read_records_csv(records_path)?;
    if rows.len() < 2 {
        return Err(Error::InvalidSpec(format!(
            "analysis needs at least 2 records, got {}",
            rows.len()
        )));
    }
    let records: Vec<_> = rows.iter().map(|r| r.to_experiment_record()).collect();
    let report = analyze_records(&records, &conditioning_registry())?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::InvalidSpec(format!("cannot create {}: {e}", out_dir.display())))?;
    std::fs::write(out_dir.join("mi_report.csv"), report.to_csv())
        .map_err(|e| Error::InvalidSpec(format!("cannot write mi_report.csv: {e}")))?;
    std::fs::write(out_dir.join("mi_report.json"), report.to_json()?)
        .map_err(|e| Error::InvalidSpec(format!("cannot write mi_report.json: {e}")))?;
    Ok(report)
}
