use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use weightvol::data::{load_idx, synth_blobs, Dataset};
use weightvol::nn::{mlp_layers, Activation, LayerSpec, TrainConfig};
use weightvol::noise::NoiseConfig;
use weightvol::volume::{PosteriorConfig, SamplingVolumeConfig, TrackSettings};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Declarative experiment configuration. Unknown keys are errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub architecture: ArchitectureSpec,
    pub train: TrainSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub volume: VolumeSpec,
    #[serde(default)]
    pub sharpness: SharpnessSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synth {
        class_count: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        spread: f64,
        /// Defaults to the experiment seed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_limit: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_limit: Option<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    /// Hidden layer widths, input and output dims come from the dataset.
    pub hidden: Vec<usize>,
    pub activation: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_halve_every: Option<usize>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Inverted-dropout rate applied to every hidden layer.
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub mode: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub refresh_every: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { mode: "none".into(), lambda1: 0.0, lambda2: 0.0, lambda3: 0.0, refresh_every: 50 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeSpec {
    pub posterior_iters: usize,
    pub epsilon: f64,
    pub perturb_std: f64,
    pub fine_tune_lr: f64,
    pub fine_tune_batch: usize,
    pub min_samples: usize,
    pub subset_size: usize,
    pub subset_count: usize,
    pub shrinkage: f64,
    pub damping: f64,
    pub mask_draws: usize,
    pub track_every: usize,
    pub factor_sample_limit: Option<usize>,
}

impl Default for VolumeSpec {
    fn default() -> Self {
        Self {
            posterior_iters: 200,
            epsilon: 0.05,
            perturb_std: 0.1,
            fine_tune_lr: 1e-4,
            fine_tune_batch: 128,
            min_samples: 16,
            subset_size: 50,
            subset_count: 20,
            shrinkage: 0.1,
            damping: 1e-4,
            mask_draws: 8,
            track_every: 10,
            factor_sample_limit: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharpnessSpec {
    pub epsilon: f64,
    pub mc_draws: usize,
}

impl Default for SharpnessSpec {
    fn default() -> Self {
        Self { epsilon: 0.05, mc_draws: 8 }
    }
}

/// Hyperparameter grid around a base configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub schema_version: u32,
    pub base: ExperimentConfig,
    pub grid: GridAxes,
    pub seeds: Vec<u64>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridAxes {
    pub dropout_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub lr: Vec<f64>,
    pub depth: Vec<usize>,
    pub activation: Vec<String>,
    pub weight_decay: Vec<f64>,
    pub width: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            dropout_rate: vec![],
            batch_size: vec![],
            lr: vec![],
            depth: vec![],
            activation: vec![],
            weight_decay: vec![],
            width: vec![],
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    DatasetNotFound(PathBuf),
    Invalid(String),
    Io(PathBuf, std::io::Error),
    Parse(serde_json::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::DatasetNotFound(p) => write!(f, "dataset path not found: {}", p.display()),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
            ConfigError::Io(p, e) => write!(f, "i/o error on {}: {e}", p.display()),
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {}, expected {CONFIG_SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        self.activation()?;
        if let DatasetSpec::Idx { train_images, train_labels, test_images, test_labels, .. } =
            &self.dataset
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if !p.exists() {
                    return Err(ConfigError::DatasetNotFound(p.clone()));
                }
            }
        }
        if self.architecture.hidden.is_empty() {
            return Err(ConfigError::Invalid("architecture.hidden must not be empty".into()));
        }
        noise_mode(&self.noise.mode).map_err(ConfigError::Invalid)?;
        Ok(())
    }

    pub fn activation(&self) -> Result<Activation, ConfigError> {
        self.architecture
            .activation
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("unknown activation {:?}", self.architecture.activation)))
    }

    /// Loads (or generates) the train/test datasets.
    pub fn datasets(&self) -> Result<(Dataset, Dataset), weightvol::Error> {
        match &self.dataset {
            DatasetSpec::Synth { class_count, dim, train_per_class, test_per_class, spread, seed } => {
                let total = train_per_class + test_per_class;
                let all = synth_blobs(*class_count, *dim, total, *spread, seed.unwrap_or(self.seed))?;
                // samples are interleaved by class, so a front split stays
                // balanced
                Ok(all.split_at(class_count * train_per_class))
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
            } => {
                let train = load_idx(train_images, train_labels, *train_limit)?;
                let test = load_idx(test_images, test_labels, *test_limit)?;
                Ok((train, test))
            }
        }
    }

    /// Layer specs for this configuration given the dataset dims.
    pub fn layers(&self, input_dim: usize, class_count: usize) -> Result<Vec<LayerSpec>, ConfigError> {
        let activation = self.activation()?;
        let mut dims = Vec::with_capacity(self.architecture.hidden.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.architecture.hidden);
        dims.push(class_count);
        Ok(mlp_layers(&dims, activation, self.train.dropout_rate))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            lr_halve_every: self.train.lr_halve_every,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            seed: self.seed,
            dropout_enabled: self.train.dropout_rate > 0.0,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            mode: noise_mode(&self.noise.mode).expect("validated"),
            lambda1: self.noise.lambda1,
            lambda2: self.noise.lambda2,
            lambda3: self.noise.lambda3,
            refresh_every: self.noise.refresh_every,
        }
    }

    pub fn posterior_config(&self) -> PosteriorConfig {
        PosteriorConfig {
            n_iters: self.volume.posterior_iters,
            epsilon: self.volume.epsilon,
            perturb_std: self.volume.perturb_std,
            fine_tune_lr: self.volume.fine_tune_lr,
            fine_tune_batch: self.volume.fine_tune_batch,
            fine_tune_dropout: self.train.dropout_rate > 0.0,
            min_samples: self.volume.min_samples,
        }
    }

    pub fn sampling_config(&self) -> SamplingVolumeConfig {
        SamplingVolumeConfig {
            subset_size: self.volume.subset_size,
            subset_count: self.volume.subset_count,
            shrinkage: self.volume.shrinkage,
        }
    }

    pub fn track_settings(&self) -> TrackSettings {
        TrackSettings {
            every_k_epochs: self.volume.track_every,
            mask_draws: self.volume.mask_draws,
            damping_scale: self.volume.damping,
            sample_limit: self.volume.factor_sample_limit,
        }
    }
}

fn noise_mode(s: &str) -> Result<weightvol::noise::NoiseMode, String> {
    match s {
        "none" => Ok(weightvol::noise::NoiseMode::None),
        "disentangle" => Ok(weightvol::noise::NoiseMode::Disentangle),
        "weight_noise" => Ok(weightvol::noise::NoiseMode::WeightNoise),
        other => Err(format!("unknown noise mode {other:?}")),
    }
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let spec: GridSpec = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
        if spec.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "unsupported schema_version {}",
                spec.schema_version
            )));
        }
        spec.base.validate()?;
        if spec.seeds.is_empty() {
            return Err(ConfigError::Invalid("grid needs at least one seed".into()));
        }
        Ok(spec)
    }

    /// Cartesian product of the axes (empty axes fall back to the base
    /// config's value).
    pub fn cells(&self) -> Vec<GridCell> {
        let base = &self.base;
        let dropout = non_empty(&self.grid.dropout_rate, base.train.dropout_rate);
        let batch = non_empty(&self.grid.batch_size, base.train.batch_size);
        let lr = non_empty(&self.grid.lr, base.train.learning_rate);
        let depth = non_empty(&self.grid.depth, base.architecture.hidden.len() + 1);
        let activation = non_empty(&self.grid.activation, base.architecture.activation.clone());
        let weight_decay = non_empty(&self.grid.weight_decay, base.train.weight_decay);
        let width = non_empty(&self.grid.width, 1.0);

        let mut cells = Vec::new();
        let mut index = 0usize;
        for &d in &dropout {
            for &b in &batch {
                for &l in &lr {
                    for &dp in &depth {
                        for act in &activation {
                            for &wd in &weight_decay {
                                for &w in &width {
                                    cells.push(GridCell {
                                        index,
                                        dropout_rate: d,
                                        batch_size: b,
                                        lr: l,
                                        depth: dp,
                                        activation: act.clone(),
                                        weight_decay: wd,
                                        width: w,
                                    });
                                    index += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    /// Total number of runs (cells x seeds).
    pub fn run_count(&self) -> usize {
        self.cells().len() * self.seeds.len()
    }

    /// Experiment config for one cell/seed, deriving the architecture from
    /// the cell's depth and width.
    pub fn cell_config(&self, cell: &GridCell, seed: u64) -> ExperimentConfig {
        let mut config = self.base.clone();
        config.seed = seed;
        config.train.dropout_rate = cell.dropout_rate;
        config.train.batch_size = cell.batch_size;
        config.train.learning_rate = cell.lr;
        config.train.weight_decay = cell.weight_decay;
        config.architecture.activation = cell.activation.clone();
        config.architecture.hidden = hidden_ladder(&self.base.architecture.hidden, cell.depth, cell.width);
        config
    }
}

fn non_empty<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Hidden widths for a cell: the base ladder truncated or extended (by
/// halving) to `depth - 1` layers, scaled by `width`, floored at 4 units.
pub fn hidden_ladder(base: &[usize], depth: usize, width: f64) -> Vec<usize> {
    let hidden_count = depth.saturating_sub(1).max(1);
    let mut ladder: Vec<usize> = base.to_vec();
    while ladder.len() < hidden_count {
        let last = *ladder.last().unwrap();
        ladder.push((last / 2).max(4));
    }
    ladder.truncate(hidden_count);
    ladder.iter().map(|&h| ((h as f64 * width).round() as usize).max(4)).collect()
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub depth: usize,
    pub activation: String,
    pub weight_decay: f64,
    pub width: f64,
}

impl GridCell {
    pub fn config_id(&self, seed: u64) -> String {
        format!("c{:04}_s{seed}", self.index)
    }
}

/// Numeric encoding used in analysis records (relu = 0, tanh = 1).
pub fn encode_activation(name: &str) -> f64 {
    match name {
        "tanh" => 1.0,
        _ => 0.0,
    }
}
