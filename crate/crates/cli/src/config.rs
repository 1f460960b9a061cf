//! Run configuration: one TOML document that pins everything a run needs.
//!
//! A `RunConfig` is assembled in layers. The base profile (published scale, or
//! the desk-scale profile under `--tiny`) is serialized to a TOML table, the
//! optional configuration file is deep-merged over it, `--set key=value`
//! overrides are applied on top, and the result is deserialized back with
//! unknown keys rejected. `resolve()` then wires the master seed and output
//! directory into the nested sections and stamps the configuration with its
//! fingerprint, so every artifact written by a command can carry the identity
//! of the configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kernelga::data::preprocess::{preprocess_dataset, PreprocessOptions};
use kernelga::data::synthetic::{self, generate_synthetic};
use kernelga::data::{idx, image_dir, split_train_val, Dataset, SplitSpec};
use kernelga::ga::GaConfig;
use kernelga::genome::NetworkTemplate;
use kernelga::trainer::TrainConfig;
use kernelga::{Error, Result};

/// File name of the resolved configuration written into every run directory.
pub const RUN_CONFIG_FILE: &str = "run-config.toml";

/// Where the data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    /// Three-class Gaussian-blob images drawn from the run seed.
    Synthetic,
    /// Big-endian IDX image/label file pair.
    Idx,
    /// Directory tree with one subdirectory of images per class.
    ImageDir,
}

/// Dataset selection and split sizing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Samples to generate; applies to the synthetic source only.
    pub n_samples: usize,
    /// Samples held out for validation.
    pub validation_size: usize,
    /// IDX image file (`source = "idx"`).
    pub images: Option<PathBuf>,
    /// IDX label file (`source = "idx"`).
    pub labels: Option<PathBuf>,
    /// Root of the per-class image directories (`source = "image-dir"`).
    pub root: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> DataConfig {
        DataConfig {
            source: DataSource::Synthetic,
            n_samples: 600,
            validation_size: 100,
            images: None,
            labels: None,
            root: None,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.validation_size == 0 {
            return Err(Error::config("data.validation_size must be at least 1"));
        }
        match self.source {
            DataSource::Synthetic => {
                if self.n_samples == 0 {
                    return Err(Error::config("data.n_samples must be at least 1"));
                }
                if self.validation_size >= self.n_samples {
                    return Err(Error::config(format!(
                        "data.validation_size ({}) must be smaller than data.n_samples ({})",
                        self.validation_size, self.n_samples
                    )));
                }
            }
            DataSource::Idx => {
                if self.images.is_none() || self.labels.is_none() {
                    return Err(Error::config(
                        "data.images and data.labels are required for source = \"idx\"",
                    ));
                }
            }
            DataSource::ImageDir => {
                if self.root.is_none() {
                    return Err(Error::config(
                        "data.root is required for source = \"image-dir\"",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Preprocessing knobs for the raw-image sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Median filter before the Gaussian blur (the default) or the reverse.
    pub median_first: bool,
}

impl Default for PreprocessConfig {
    fn default() -> PreprocessConfig {
        PreprocessConfig { median_first: true }
    }
}

impl PreprocessConfig {
    pub fn to_options(self) -> PreprocessOptions {
        PreprocessOptions { median_first: self.median_first }
    }
}

/// Everything one run needs: search and training hyperparameters, network
/// template, data selection, preprocessing, output directory and master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stream of randomness in the run derives from it.
    pub seed: u64,
    /// Run directory: all artifacts are written beneath it.
    pub out_dir: PathBuf,
    /// Fingerprint of the semantic configuration; filled in by `resolve()`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    pub ga: GaConfig,
    pub train: TrainConfig,
    pub template: NetworkTemplate,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            config_fingerprint: None,
            ga: GaConfig::default(),
            train: TrainConfig::default(),
            template: NetworkTemplate::full_default(synthetic::NUM_CLASSES),
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
        }
    }
}

/// Command-line layers applied on top of the base profile, in order: profile,
/// configuration file, `--set` overrides, then the typed flags.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub tiny: bool,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub set: Vec<String>,
}

impl RunConfig {
    /// Desk-scale profile: a search that finishes in minutes on one core.
    pub fn tiny() -> RunConfig {
        RunConfig {
            out_dir: PathBuf::from("runs/tiny"),
            ga: GaConfig {
                population_size: 6,
                max_generations: 3,
                ..GaConfig::default()
            },
            train: TrainConfig {
                epochs: 5,
                batch_size: 50,
                ..TrainConfig::default()
            },
            template: NetworkTemplate::tiny(synthetic::NUM_CLASSES),
            data: DataConfig {
                n_samples: 360,
                validation_size: 60,
                ..DataConfig::default()
            },
            ..RunConfig::default()
        }
    }

    /// Builds the effective configuration from the layered sources and
    /// resolves it. Unknown keys anywhere in the document are rejected.
    pub fn from_overrides(overrides: &Overrides) -> Result<RunConfig> {
        let base = if overrides.tiny { RunConfig::tiny() } else { RunConfig::default() };
        let mut value = toml::Value::try_from(&base)
            .map_err(|e| Error::config(format!("cannot serialize base profile: {e}")))?;
        if let Some(path) = &overrides.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
            let file_table: toml::Table = text
                .parse()
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            merge_value(&mut value, toml::Value::Table(file_table));
        }
        for entry in &overrides.set {
            apply_set(&mut value, entry)?;
        }
        let mut config: RunConfig = value
            .try_into()
            .map_err(|e| Error::config(format!("invalid configuration: {e}")))?;
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.out {
            config.out_dir = out.clone();
        }
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Wires the master seed and output directory into the nested sections
    /// and stamps the fingerprint. Values set for the same fields in a
    /// configuration file are overwritten: the top-level `seed` and `out_dir`
    /// are the single sources of truth.
    pub fn resolve(&mut self) {
        self.ga.master_seed = self.seed;
        self.train.eval_seed = self.seed;
        self.ga.checkpoint_dir = Some(self.out_dir.join("checkpoints"));
        self.train.checkpoint_dir = Some(self.out_dir.join("models"));
        let fingerprint = self.fingerprint();
        self.config_fingerprint = Some(fingerprint.clone());
        self.ga.config_fingerprint = Some(fingerprint);
    }

    pub fn validate(&self) -> Result<()> {
        self.ga.validate()?;
        self.train.validate()?;
        self.template.validate()?;
        self.data.validate()?;
        if self.data.source == DataSource::Synthetic
            && self.template.num_classes != synthetic::NUM_CLASSES
        {
            return Err(Error::config(format!(
                "synthetic data has {} classes but template.num_classes is {}",
                synthetic::NUM_CLASSES,
                self.template.num_classes
            )));
        }
        Ok(())
    }

    /// Digest of the semantic configuration: seed, search and training
    /// hyperparameters, template, data selection and preprocessing. Output
    /// locations are deliberately excluded, so the same logical run produces
    /// the same fingerprint wherever its artifacts land.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct View<'a> {
            seed: u64,
            population_size: usize,
            max_generations: u64,
            crossover_rate: f64,
            mutation_probability: f64,
            offspring_per_generation: usize,
            epochs: usize,
            batch_size: usize,
            lr: f64,
            lr_decay: f64,
            lr_floor: f64,
            beta: f64,
            epsilon: f64,
            dropout_rate: f64,
            template: &'a NetworkTemplate,
            source: DataSource,
            n_samples: usize,
            validation_size: usize,
            images: &'a Option<PathBuf>,
            labels: &'a Option<PathBuf>,
            root: &'a Option<PathBuf>,
            median_first: bool,
        }
        let view = View {
            seed: self.seed,
            population_size: self.ga.population_size,
            max_generations: self.ga.max_generations,
            crossover_rate: self.ga.crossover_rate,
            mutation_probability: self.ga.mutation_probability,
            offspring_per_generation: self.ga.offspring_per_generation,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.optim.lr,
            lr_decay: self.train.optim.lr_decay,
            lr_floor: self.train.optim.lr_floor,
            beta: self.train.optim.beta,
            epsilon: self.train.optim.epsilon,
            dropout_rate: self.train.dropout_rate,
            template: &self.template,
            source: self.data.source,
            n_samples: self.data.n_samples,
            validation_size: self.data.validation_size,
            images: &self.data.images,
            labels: &self.data.labels,
            root: &self.data.root,
            median_first: self.preprocess.median_first,
        };
        let json = serde_json::to_string(&view).expect("fingerprint view serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Writes the resolved configuration into the run directory.
    pub fn write_resolved(&self) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("cannot serialize configuration: {e}")))?;
        let path = self.out_dir.join(RUN_CONFIG_FILE);
        fs::write(&path, text)
            .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
    }

    /// Reads the resolved configuration back from a run directory. The stored
    /// `out_dir` is replaced by the directory actually read from, so a
    /// relocated run keeps working; the fingerprint is recomputed (it excludes
    /// locations, so relocation does not change it).
    pub fn load_resolved(run_dir: &Path) -> Result<RunConfig> {
        let path = run_dir.join(RUN_CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::data(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        config.out_dir = run_dir.to_path_buf();
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Cache file the preprocessed dataset is stored under. The name keys on
    /// the data-shaping knobs (source, sizes, preprocessing, seed), so
    /// changing any of them rebuilds rather than reusing a stale cache.
    pub fn dataset_cache_path(&self) -> PathBuf {
        #[derive(Serialize)]
        struct View<'a> {
            data: &'a DataConfig,
            preprocess: &'a PreprocessConfig,
            seed: u64,
        }
        let json = serde_json::to_string(&View {
            data: &self.data,
            preprocess: &self.preprocess,
            seed: self.seed,
        })
        .expect("cache view serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(8);
        for byte in &digest[..4] {
            hex.push_str(&format!("{byte:02x}"));
        }
        self.out_dir.join(format!("dataset-{hex}.kgad"))
    }

    /// Loads the run's dataset, preprocessing and caching it on first use.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let cache = self.dataset_cache_path();
        if cache.exists() {
            log::info!("loading cached dataset {}", cache.display());
            return Dataset::load_cache(&cache);
        }
        let dataset = self.build_dataset()?;
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| Error::data(format!("cannot create {}: {e}", self.out_dir.display())))?;
        dataset.save_cache(&cache)?;
        log::info!("cached dataset at {}", cache.display());
        Ok(dataset)
    }

    fn build_dataset(&self) -> Result<Dataset> {
        let dataset = match self.data.source {
            DataSource::Synthetic => generate_synthetic(self.data.n_samples, self.seed)?,
            DataSource::Idx => {
                let images = require_file(self.data.images.as_deref(), "data.images")?;
                let labels = require_file(self.data.labels.as_deref(), "data.labels")?;
                let raw = idx::load_idx(images, labels)?;
                preprocess_dataset(&raw, self.preprocess.to_options())?
            }
            DataSource::ImageDir => {
                let root = require_file(self.data.root.as_deref(), "data.root")?;
                let raw = image_dir::load_image_dir(root)?;
                preprocess_dataset(&raw, self.preprocess.to_options())?
            }
        };
        if dataset.num_classes() != self.template.num_classes {
            return Err(Error::config(format!(
                "dataset has {} classes but template.num_classes is {}",
                dataset.num_classes(),
                self.template.num_classes
            )));
        }
        if dataset.side() != self.template.input_side {
            return Err(Error::config(format!(
                "dataset images are {0}x{0} but template.input_side is {1}",
                dataset.side(),
                self.template.input_side
            )));
        }
        Ok(dataset)
    }

    /// Seeded train/validation split of the run's dataset.
    pub fn split(&self, dataset: &Dataset) -> Result<(Dataset, Dataset)> {
        split_train_val(
            dataset,
            &SplitSpec { validation_size: self.data.validation_size, split_seed: self.seed },
        )
    }
}

fn require_file<'a>(path: Option<&'a Path>, key: &str) -> Result<&'a Path> {
    let path = path.ok_or_else(|| Error::config(format!("{key} is not set")))?;
    if !path.exists() {
        return Err(Error::data(format!("data path not found: {}", path.display())));
    }
    Ok(path)
}

/// Deep merge: tables merge key by key, everything else is replaced.
fn merge_value(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(base_table), toml::Value::Table(over_table)) => {
            for (key, over_entry) in over_table {
                match base_table.get_mut(&key) {
                    Some(base_entry) => merge_value(base_entry, over_entry),
                    None => {
                        base_table.insert(key, over_entry);
                    }
                }
            }
        }
        (base_slot, over_value) => *base_slot = over_value,
    }
}

/// Applies one `--set key.path=value` override. The value is parsed as a TOML
/// literal (so numbers, booleans and arrays work) and falls back to a string,
/// which keeps `--set data.source=synthetic` usable without quoting.
fn apply_set(value: &mut toml::Value, entry: &str) -> Result<()> {
    let (path, raw) = entry
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("--set expects key=value, got \"{entry}\"")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::usage(format!("--set expects key=value, got \"{entry}\"")));
    }
    let leaf = parse_toml_literal(raw.trim());
    let mut cursor = value;
    let segments: Vec<&str> = path.split('.').collect();
    for segment in &segments[..segments.len() - 1] {
        let table = cursor.as_table_mut().ok_or_else(|| {
            Error::usage(format!("--set {path}: \"{segment}\" is not a table"))
        })?;
        cursor = table
            .entry((*segment).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let last = segments[segments.len() - 1];
    let table = cursor
        .as_table_mut()
        .ok_or_else(|| Error::usage(format!("--set {path}: parent is not a table")))?;
    table.insert(last.to_string(), leaf);
    Ok(())
}

fn parse_toml_literal(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").expect("literal was just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn resolved_tiny(out: &Path) -> RunConfig {
        let mut config = RunConfig::tiny();
        config.out_dir = out.to_path_buf();
        config.resolve();
        config
    }

    #[test]
    fn tiny_profile_pins_the_desk_scale_values() {
        let config = RunConfig::tiny();
        assert_eq!(config.ga.population_size, 6);
        assert_eq!(config.ga.max_generations, 3);
        assert_eq!(config.train.epochs, 5);
        assert_eq!(config.template.channel_plan, vec![8, 16, 32]);
        assert_eq!(config.template.fc_width, 64);
        assert_eq!(config.data.n_samples, 360);
        assert_eq!(config.data.validation_size, 60);
    }

    #[test]
    fn default_profile_matches_the_published_scale() {
        let config = RunConfig::default();
        assert_eq!(config.ga.population_size, 100);
        assert_eq!(config.ga.max_generations, 20);
        assert_eq!(config.train.epochs, 100);
        assert_eq!(config.train.batch_size, 250);
        assert_eq!(config.template.channel_plan, vec![32, 128, 256]);
        assert_eq!(config.template.fc_width, 2048);
    }

    #[test]
    fn config_file_overrides_merge_over_the_base_profile() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 9\n[ga]\npopulation_size = 12\n").unwrap();
        let overrides = Overrides {
            config: Some(path),
            tiny: true,
            ..Overrides::default()
        };
        let config = RunConfig::from_overrides(&overrides).unwrap();
        assert_eq!(config.seed, 9);
        assert_eq!(config.ga.population_size, 12);
        // Untouched tiny-profile values survive the merge.
        assert_eq!(config.ga.max_generations, 3);
        assert_eq!(config.train.epochs, 5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[ga]\npopulation_sizes = 12\n").unwrap();
        let overrides = Overrides { config: Some(path), ..Overrides::default() };
        let err = RunConfig::from_overrides(&overrides).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("population_sizes"), "{err}");
    }

    #[test]
    fn set_overrides_parse_toml_literals_and_fall_back_to_strings() {
        let overrides = Overrides {
            tiny: true,
            set: vec![
                "ga.population_size=30".to_string(),
                "train.optim.lr=0.002".to_string(),
                "template.channel_plan=[4, 8, 16]".to_string(),
                "data.source=synthetic".to_string(),
            ],
            ..Overrides::default()
        };
        let config = RunConfig::from_overrides(&overrides).unwrap();
        assert_eq!(config.ga.population_size, 30);
        assert_eq!(config.train.optim.lr, 0.002);
        assert_eq!(config.template.channel_plan, vec![4, 8, 16]);
        assert_eq!(config.data.source, DataSource::Synthetic);
    }

    #[test]
    fn set_with_a_bad_key_is_a_configuration_error() {
        let overrides = Overrides {
            tiny: true,
            set: vec!["ga.population=30".to_string()],
            ..Overrides::default()
        };
        let err = RunConfig::from_overrides(&overrides).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn set_without_an_equals_sign_is_rejected() {
        let overrides = Overrides {
            set: vec!["ga.population_size".to_string()],
            ..Overrides::default()
        };
        let err = RunConfig::from_overrides(&overrides).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn typed_flags_win_over_the_configuration_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "seed = 9\nout_dir = \"from-file\"\n").unwrap();
        let overrides = Overrides {
            config: Some(path),
            tiny: true,
            seed: Some(77),
            out: Some(PathBuf::from("from-flag")),
            ..Overrides::default()
        };
        let config = RunConfig::from_overrides(&overrides).unwrap();
        assert_eq!(config.seed, 77);
        assert_eq!(config.out_dir, PathBuf::from("from-flag"));
    }

    #[test]
    fn resolve_wires_seed_and_directories_into_the_sections() {
        let config = resolved_tiny(Path::new("runs/x"));
        assert_eq!(config.ga.master_seed, config.seed);
        assert_eq!(config.train.eval_seed, config.seed);
        assert_eq!(config.ga.checkpoint_dir, Some(PathBuf::from("runs/x/checkpoints")));
        assert_eq!(config.train.checkpoint_dir, Some(PathBuf::from("runs/x/models")));
        let fingerprint = config.config_fingerprint.clone().unwrap();
        assert_eq!(fingerprint.len(), 16);
        assert_eq!(config.ga.config_fingerprint, Some(fingerprint));
    }

    #[test]
    fn fingerprint_ignores_locations_but_tracks_semantics() {
        let a = resolved_tiny(Path::new("runs/a"));
        let b = resolved_tiny(Path::new("runs/b"));
        assert_eq!(a.config_fingerprint, b.config_fingerprint);

        let mut c = RunConfig::tiny();
        c.seed = 1;
        c.resolve();
        assert_ne!(a.config_fingerprint, c.config_fingerprint);

        let mut d = RunConfig::tiny();
        d.ga.mutation_probability = 0.3;
        d.resolve();
        assert_ne!(a.config_fingerprint, d.config_fingerprint);
    }

    #[test]
    fn resolved_config_round_trips_through_the_run_directory() {
        let dir = tempdir().unwrap();
        let config = resolved_tiny(dir.path());
        fs::create_dir_all(&config.out_dir).unwrap();
        config.write_resolved().unwrap();
        let reloaded = RunConfig::load_resolved(dir.path()).unwrap();
        assert_eq!(reloaded, config);
    }

    #[test]
    fn relocated_run_directory_keeps_the_fingerprint() {
        let dir = tempdir().unwrap();
        let original = dir.path().join("original");
        fs::create_dir_all(&original).unwrap();
        let config = resolved_tiny(&original);
        config.write_resolved().unwrap();

        let moved = dir.path().join("moved");
        fs::rename(&original, &moved).unwrap();
        let reloaded = RunConfig::load_resolved(&moved).unwrap();
        assert_eq!(reloaded.out_dir, moved);
        assert_eq!(reloaded.config_fingerprint, config.config_fingerprint);
        assert_eq!(reloaded.ga.checkpoint_dir, Some(moved.join("checkpoints")));
    }

    #[test]
    fn synthetic_dataset_is_cached_and_reloaded() {
        let dir = tempdir().unwrap();
        let mut config = RunConfig::tiny();
        config.out_dir = dir.path().to_path_buf();
        config.data.n_samples = 30;
        config.data.validation_size = 9;
        config.resolve();

        let first = config.load_dataset().unwrap();
        let cache = config.dataset_cache_path();
        assert!(cache.exists());
        let second = config.load_dataset().unwrap();
        assert_eq!(first.len(), second.len());
        assert_eq!(first.labels(), second.labels());
    }

    #[test]
    fn missing_idx_path_is_a_data_error_naming_the_path() {
        let mut config = RunConfig::tiny();
        config.data.source = DataSource::Idx;
        config.data.images = Some(PathBuf::from("/no/such/images.idx"));
        config.data.labels = Some(PathBuf::from("/no/such/labels.idx"));
        config.resolve();
        let err = config.load_dataset().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/no/such/images.idx"), "{err}");
    }

    #[test]
    fn validate_rejects_a_class_count_mismatch_for_synthetic_data() {
        let mut config = RunConfig::tiny();
        config.template.num_classes = 5;
        config.resolve();
        let err = config.validate().unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
