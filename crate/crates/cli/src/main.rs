mod analyze;
mod config;
mod experiment;
mod grid;
mod records;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, GridSpec};
use std::path::PathBuf;
use std::process::ExitCode;
use weightvol::analysis::{lemma2_montecarlo, Lemma2Params};
use weightvol::measures::{complexity_measures, measures_csv_header, measures_csv_row, sharpness_sigma};
use weightvol::nn::{evaluate, Checkpoint};
use weightvol::volume::{
    collect_posterior_samples, kfac_factors, laplace_volume, sampling_volume, VolumeReport,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Weight-volume experiment runner: training, volume estimation, complexity
/// measures, hyperparameter grids, and mutual-information analysis.
#[derive(Parser)]
#[command(name = "weightvol", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write the full artifact bundle.
    Train(CommonArgs),
    /// Re-estimate both weight volumes for a saved checkpoint.
    Volume {
        #[command(flatten)]
        common: CommonArgs,
        /// Checkpoint to analyze (default: <out>/checkpoint_final.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Recompute the measure row from a bundle directory.
    Measures(CommonArgs),
    /// Run a hyperparameter grid to a records CSV (resumable).
    Grid {
        #[command(flatten)]
        common: CommonArgs,
        /// Worker pool width (fallback: WEIGHTVOL_WORKERS, then 1).
        #[arg(long)]
        workers: Option<usize>,
        /// Skip cells whose completed rows already exist.
        #[arg(long)]
        resume: bool,
    },
    /// Mutual-information / sign-error analysis of a records CSV.
    Analyze {
        /// Records CSV produced by `grid`.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo check of the dropout update covariance/correlation
    /// algebra over a parameter grid.
    LemmaCheck {
        /// Draws per grid point.
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        /// Where to write lemma_report.json (default: stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train with disentanglement or weight noise and write the bundle.
    NoiseTrain(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code)
        }
    }
}

struct CliFailure {
    kind: String,
    message: String,
    exit_code: u8,
}

impl CliFailure {
    fn to_json(&self) -> String {
        serde_json::json!({ "kind": self.kind, "message": self.message }).to_string()
    }

    fn runtime(kind: &str, message: String) -> Self {
        Self { kind: kind.into(), message, exit_code: EXIT_RUNTIME }
    }
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        let kind = match &e {
            ConfigError::DatasetNotFound(_) => "DatasetNotFound",
            ConfigError::Parse(_) => "ConfigParse",
            ConfigError::Io(..) => "Io",
            ConfigError::Invalid(_) => "InvalidSpec",
        };
        Self { kind: kind.into(), message: e.to_string(), exit_code: EXIT_CONFIG }
    }
}

impl From<weightvol::Error> for CliFailure {
    fn from(e: weightvol::Error) -> Self {
        let exit_code = match &e {
            weightvol::Error::InvalidSpec(_)
            | weightvol::Error::BadMagic { .. }
            | weightvol::Error::TruncatedFile { .. }
            | weightvol::Error::CountMismatch { .. }
            | weightvol::Error::Io { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Self { kind: e.kind().into(), message: e.to_string(), exit_code }
    }
}

fn run(cli: Cli) -> Result<(), CliFailure> {
    match cli.command {
        Command::Train(common) => {
            let (config, out) = load_config(&common)?;
            let artifacts = experiment::run_experiment(&config, &out, &run_id(&config), false)?;
            let last = artifacts.outcome.history.final_stats();
            println!(
                "trained {} epochs; gg_loss {:.6}; bundle in {}",
                last.map_or(0, |s| s.epoch),
                artifacts.gg_loss,
                out.display()
            );
            Ok(())
        }
        Command::NoiseTrain(common) => {
            let (config, out) = load_config(&common)?;
            let artifacts = experiment::run_experiment(&config, &out, &run_id(&config), true)?;
            println!(
                "noise-trained ({}); gg_loss {:.6}; bundle in {}",
                config.noise.mode,
                artifacts.gg_loss,
                out.display()
            );
            Ok(())
        }
        Command::Volume { common, checkpoint } => {
            let (config, out) = load_config(&common)?;
            let ckpt_path = checkpoint.unwrap_or_else(|| out.join("checkpoint_final.json"));
            let params = Checkpoint::load(&ckpt_path)?.to_params()?;
            let (train_set, _) = config.datasets()?;
            let mut rng = seeded(config.seed, 16);
            let factors = kfac_factors(
                &params,
                &train_set,
                config.train.dropout_rate > 0.0,
                config.volume.mask_draws,
                config.volume.damping,
                &mut rng,
            )?;
            let vol_laplace = laplace_volume(&factors)?;
            let mut rng = seeded(config.seed, 17);
            let samples =
                collect_posterior_samples(&params, &train_set, &config.posterior_config(), &mut rng)?;
            let vol_sampling = sampling_volume(&samples, &config.sampling_config(), &mut rng)?;
            write_out(&out, "volume_laplace.json", &vol_laplace.to_json()?)?;
            write_out(&out, "volume_sampling.json", &vol_sampling.to_json()?)?;
            println!(
                "laplace mean per-dim log-vol {:.6}; sampling {:.6}",
                vol_laplace.mean_per_dim_log_vol(),
                vol_sampling.mean_per_dim_log_vol()
            );
            Ok(())
        }
        Command::Measures(common) => {
            let (config, out) = load_config(&common)?;
            let initial = Checkpoint::load(out.join("checkpoint_initial.json"))?.to_params()?;
            let final_params = Checkpoint::load(out.join("checkpoint_final.json"))?.to_params()?;
            let vol_laplace = VolumeReport::from_json(&read_out(&out, "volume_laplace.json")?)?;
            let vol_sampling = VolumeReport::from_json(&read_out(&out, "volume_sampling.json")?)?;
            let (train_set, test_set) = config.datasets()?;
            let mut rng = seeded(config.seed, 18);
            let sharpness = sharpness_sigma(
                &final_params,
                &train_set,
                config.sharpness.epsilon,
                config.sharpness.mc_draws,
                &mut rng,
            )?;
            let report =
                complexity_measures(&final_params, &initial, &sharpness, &vol_laplace, &vol_sampling)?;
            let (train_loss, train_acc) = evaluate(&final_params, &train_set)?;
            let (test_loss, test_acc) = evaluate(&final_params, &test_set)?;
            let mut csv = measures_csv_header();
            csv.push('\n');
            csv.push_str(&measures_csv_row(
                &run_id(&config),
                &report,
                test_loss - train_loss,
                test_acc - train_acc,
            ));
            csv.push('\n');
            write_out(&out, "measures.csv", &csv)?;
            println!("pac_s_laplace {:.6}; pac_s_sampling {:.6}", report.pac_s_laplace, report.pac_s_sampling);
            Ok(())
        }
        Command::Grid { common, workers, resume } => {
            let spec = GridSpec::load(&common.config)?;
            let out = common.out.clone().unwrap_or_else(|| spec.base.output_dir.clone());
            std::fs::create_dir_all(&out)
                .map_err(|e| CliFailure::runtime("Io", format!("cannot create {}: {e}", out.display())))?;
            let workers = workers
                .or_else(|| std::env::var("WEIGHTVOL_WORKERS").ok().and_then(|v| v.parse().ok()))
                .unwrap_or(1);
            let outcome = grid::run_grid(&spec, &out, workers, resume)?;
            println!(
                "grid complete: {} rows ({} resumed), {} failed; records at {}",
                outcome.completed,
                outcome.skipped,
                outcome.failed.len(),
                out.join("records.csv").display()
            );
            if outcome.failed.is_empty() {
                Ok(())
            } else {
                Err(CliFailure::runtime(
                    "GridPartialFailure",
                    format!("{} cells failed", outcome.failed.len()),
                ))
            }
        }
        Command::Analyze { records, out } => {
            let report = analyze::analyze(&records, &out)?;
            println!("{}", report.to_csv().trim_end());
            Ok(())
        }
        Command::LemmaCheck { draws, out, seed } => {
            let mut reports = Vec::new();
            let mut all_pass = true;
            let mut rng = seeded(seed, 19);
            for &rho in &[0.0, 0.3, -0.3, 0.6, -0.6, 0.9] {
                for &q in &[0.0, 0.15, 0.3, 0.5] {
                    for &mu in &[0.0, 0.5] {
                        let params = Lemma2Params {
                            rho,
                            mean: (mu, mu),
                            variance: (1.0, 1.0),
                            dropout_rate: q,
                            n_draws: draws,
                        };
                        let report = lemma2_montecarlo(&params, &mut rng)?;
                        let pass = report.all_pass();
                        all_pass &= pass;
                        println!(
                            "rho={rho:+.1} q={q:.2} mu={mu:.1} cov={} var={} corr={} weights={}",
                            report.cov_preserved,
                            report.var_formula,
                            report.corr_bound,
                            report.weight_corr_bound
                        );
                        reports.push(report);
                    }
                }
            }
            if let Some(out) = out {
                std::fs::create_dir_all(&out).ok();
                let json = serde_json::to_string_pretty(&reports)
                    .map_err(|e| CliFailure::runtime("Serde", e.to_string()))?;
                write_out(&out, "lemma_report.json", &json)?;
            }
            if all_pass {
                Ok(())
            } else {
                Err(CliFailure::runtime("LemmaCheckFailed", "at least one check failed".into()))
            }
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<(ExperimentConfig, PathBuf), CliFailure> {
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok((config, out))
}

fn run_id(config: &ExperimentConfig) -> String {
    format!("run_s{}", config.seed)
}

fn seeded(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn write_out(dir: &std::path::Path, name: &str, contents: &str) -> Result<(), CliFailure> {
    std::fs::create_dir_all(dir).ok();
    std::fs::write(dir.join(name), contents)
        .map_err(|e| CliFailure::runtime("Io", format!("cannot write {name}: {e}")))
}

fn read_out(dir: &std::path::Path, name: &str) -> Result<String, CliFailure> {
    std::fs::read_to_string(dir.join(name))
        .map_err(|e| CliFailure::runtime("Io", format!("cannot read {name}: {e}")))
}
