use crate::config::ExperimentConfig;
use std::path::Path;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weightvol::measures::{
    complexity_measures, measures_csv_header, measures_csv_row, sharpness_sigma, MeasureReport,
};
use weightvol::nn::{Checkpoint, TrainOutcome};
use weightvol::noise::{train_with_noise, NoiseMode};
use weightvol::volume::{
    collect_posterior_samples, kfac_factors, laplace_volume, sampling_volume, track_volume,
    VolumeReport, VolumeTrail,
};
use weightvol::{Error, Result};

fn cli_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub struct ExperimentArtifacts {
    pub outcome: TrainOutcome,
    pub trail: VolumeTrail,
    pub vol_laplace: VolumeReport,
    pub vol_sampling: VolumeReport,
    pub measures: MeasureReport,
    pub gg_loss: f64,
    pub gg_acc: f64,
}

/// Runs the full pipeline for one configuration: train (optionally with
/// noise), estimate volume with both methods, compute the measures.
pub fn run_pipeline(config: &ExperimentConfig, with_noise: bool) -> Result<ExperimentArtifacts> {
    let (train_set, test_set) = config.datasets()?;
    let layers = config
        .layers(train_set.dim(), train_set.class_count())
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let train_config = config.train_config();
    let track = config.track_settings();

    let (outcome, trail) = if with_noise && config.noise_config().mode != NoiseMode::None {
        let result = train_with_noise(
            &train_config,
            &config.noise_config(),
            &train_set,
            &test_set,
            &layers,
            &track,
        )?;
        (result.outcome, result.trail)
    } else {
        track_volume(&train_config, &train_set, &test_set, &layers, &track)?
    };
    if let Some(d) = outcome.divergence {
        return Err(Error::DivergenceDetected { epoch: d.epoch, batch: d.batch, loss: d.loss });
    }
    let (gg_loss, gg_acc) = outcome.history.generalization_gap().unwrap_or((0.0, 0.0));

    // Laplace volume of the final weights (the trail's last entry is the
    // final epoch, but recompute against the configured sample limit so the
    // report is self-contained)
    let factor_set = match config.volume.factor_sample_limit {
        Some(limit) if limit < train_set.len() => train_set.split_at(limit).0,
        _ => train_set.clone(),
    };
    // estimation rngs on CLI-reserved streams, disjoint from training's
    let mut kfac_rng = cli_rng(config.seed, 16);
    let factors = kfac_factors(
        &outcome.final_params,
        &factor_set,
        train_config.dropout_enabled,
        config.volume.mask_draws,
        config.volume.damping,
        &mut kfac_rng,
    )?;
    let vol_laplace = laplace_volume(&factors)?;

    let mut posterior_rng = cli_rng(config.seed, 17);
    let samples = collect_posterior_samples(
        &outcome.final_params,
        &train_set,
        &config.posterior_config(),
        &mut posterior_rng,
    )?;
    let vol_sampling = sampling_volume(&samples, &config.sampling_config(), &mut posterior_rng)?;

    let mut sharp_rng = cli_rng(config.seed, 18);
    let sharpness = sharpness_sigma(
        &outcome.final_params,
        &train_set,
        config.sharpness.epsilon,
        config.sharpness.mc_draws,
        &mut sharp_rng,
    )?;

    let measures = complexity_measures(
        &outcome.final_params,
        &outcome.initial_params,
        &sharpness,
        &vol_laplace,
        &vol_sampling,
    )?;

    Ok(ExperimentArtifacts {
        outcome,
        trail,
        vol_laplace,
        vol_sampling,
        measures,
        gg_loss,
        gg_acc,
    })
}

/// Runs the pipeline and writes the on-disk bundle:
/// initial/final checkpoints, history CSV, both volume JSONs, and the
/// measure CSV row.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    config_id: &str,
    with_noise: bool,
) -> Result<ExperimentArtifacts> {
    let artifacts = run_pipeline(config, with_noise)?;
    write_bundle(config, &artifacts, out_dir, config_id)?;
    Ok(artifacts)
}

pub fn write_bundle(
    config: &ExperimentConfig,
    artifacts: &ExperimentArtifacts,
    out_dir: &Path,
    config_id: &str,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::InvalidSpec(format!("cannot create {}: {e}", out_dir.display())))?;
    let write = |name: &str, contents: &str| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Error::InvalidSpec(format!("cannot write {}: {e}", path.display())))
    };

    let epochs = artifacts.outcome.history.epochs.len();
    Checkpoint::from_params(&artifacts.outcome.initial_params, config.seed, 0)
        .save(out_dir.join("checkpoint_initial.json"))?;
    Checkpoint::from_params(&artifacts.outcome.final_params, config.seed, epochs)
        .save(out_dir.join("checkpoint_final.json"))?;
    write("history.csv", &artifacts.outcome.history.to_csv())?;
    write("volume_laplace.json", &artifacts.vol_laplace.to_json()?)?;
    write("volume_sampling.json", &artifacts.vol_sampling.to_json()?)?;
    let mut measures = measures_csv_header();
    measures.push('\n');
    measures.push_str(&measures_csv_row(
        config_id,
        &artifacts.measures,
        artifacts.gg_loss,
        artifacts.gg_acc,
    ));
    measures.push('\n');
    write("measures.csv", &measures)?;

    // volume trail as a simple JSON list of (epoch, report)
    let trail: Vec<serde_json::Value> = artifacts
        .trail
        .entries
        .iter()
        .map(|(epoch, report)| {
            Ok(serde_json::json!({ "epoch": epoch, "report": serde_json::to_value(report)? }))
        })
        .collect::<Result<_>>()?;
    write("volume_trail.json", &serde_json::to_string_pretty(&trail)?)?;
    Ok(())
}
