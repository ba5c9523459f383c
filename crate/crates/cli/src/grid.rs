use crate::config::GridSpec;
use crate::experiment::run_pipeline;
use crate::records::{write_records_csv, RecordRow, RECORDS_HEADER};
use rayon::prelude::*;
use std::path::Path;
use weightvol::{Error, Result};

pub struct GridOutcome {
    pub completed: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

/// Runs every (cell, seed) of the grid in a worker pool. Each run writes its
/// own single-row cell file; the merged records CSV is rebuilt from the cell
/// files in cell order at the end, so resumed and uninterrupted runs produce
/// byte-identical output.
pub fn run_grid(
    spec: &GridSpec,
    out_dir: &Path,
    workers: usize,
    resume: bool,
) -> Result<GridOutcome> {
    let runs = spec.run_count();
    if runs > spec.cap {
        return Err(Error::InvalidSpec(format!(
            "grid of {runs} runs exceeds cap {}",
            spec.cap
        )));
    }
    let cells_dir = out_dir.join("cells");
    std::fs::create_dir_all(&cells_dir)
        .map_err(|e| Error::InvalidSpec(format!("cannot create {}: {e}", cells_dir.display())))?;

    let mut jobs = Vec::new();
    for cell in spec.cells() {
        for &seed in &spec.seeds {
            jobs.push((cell.clone(), seed));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidSpec(format!("cannot build worker pool: {e}")))?;

    let results: Vec<(String, std::result::Result<bool, String>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(cell, seed)| {
                let config_id = cell.config_id(*seed);
                let cell_path = cells_dir.join(format!("{config_id}.csv"));
                if resume && cell_path.exists() {
                    if let Ok(text) = std::fs::read_to_string(&cell_path) {
                        let mut reader =
                            csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
                        if let Some(Ok(record)) = reader.records().next() {
                            if RecordRow::from_csv_record(&record).is_ok() {
                                return (config_id, Ok(true));
                            }
                        }
                    }
                }
                let config = spec.cell_config(cell, *seed);
                match run_pipeline(&config, false) {
                    Ok(artifacts) => {
                        let row = RecordRow {
                            config_id: config_id.clone(),
                            dropout_rate: cell.dropout_rate,
                            batch_size: cell.batch_size,
                            lr: cell.lr,
                            depth: cell.depth,
                            activation: cell.activation.clone(),
                            weight_decay: cell.weight_decay,
                            width: cell.width,
                            seed: *seed,
                            measures: artifacts.measures,
                            gg_loss: artifacts.gg_loss,
                            gg_acc: artifacts.gg_acc,
                        };
                        // write-then-rename so an interrupted run never
                        // leaves a half-written cell file
                        let tmp = cell_path.with_extension("tmp");
                        let write = std::fs::write(&tmp, row.to_csv_line() + "\n")
                            .and_then(|()| std::fs::rename(&tmp, &cell_path));
                        match write {
                            Ok(()) => (config_id, Ok(false)),
                            Err(e) => (config_id, Err(format!("write failed: {e}"))),
                        }
                    }
                    Err(e) => (config_id, Err(e.to_string())),
                }
            })
            .collect()
    });

    let mut completed = 0usize;
    let mut skipped = 0usize;
    let mut failed = Vec::new();
    for (config_id, result) in results {
        match result {
            Ok(true) => {
                skipped += 1;
                completed += 1;
            }
            Ok(false) => completed += 1,
            Err(message) => {
                eprintln!("grid cell {config_id} failed: {message}");
                failed.push((config_id, message));
            }
        }
    }

    merge_cells(spec, &cells_dir, out_dir)?;
    Ok(GridOutcome { completed, skipped, failed })
}

/// Rebuilds records.csv from the per-cell files in deterministic cell order.
fn merge_cells(spec: &GridSpec, cells_dir: &Path, out_dir: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for cell in spec.cells() {
        for &seed in &spec.seeds {
            let config_id = cell.config_id(seed);
            let cell_path = cells_dir.join(format!("{config_id}.csv"));
            if !cell_path.exists() {
                continue;
            }
            let text = std::fs::read_to_string(&cell_path)
                .map_err(|e| Error::InvalidSpec(format!("cannot read {}: {e}", cell_path.display())))?;
            let with_header = format!("{RECORDS_HEADER}\n{text}");
            let mut reader =
                csv::ReaderBuilder::new().has_headers(true).from_reader(with_header.as_bytes());
            for record in reader.records() {
                let record =
                    record.map_err(|e| Error::InvalidSpec(format!("bad cell row: {e}")))?;
                rows.push(RecordRow::from_csv_record(&record)?);
            }
        }
    }
    write_records_csv(&out_dir.join("records.csv"), &rows)
}

