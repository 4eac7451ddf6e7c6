use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Dataset, NetworkSpec, PatternFamily, SyntheticSpec, TensorShape, TrainConfig};
use crate::profiling::{LatencyModel, MemoryMode};
use crate::pruning::{PruneConfig, Ranking};
use crate::recovery::RecoveryConfig;
use crate::scheduler::{Objective, SchedulerConfig};
use crate::schema;
use crate::seed::{self, purpose};
use crate::simulator::BenchmarkConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Where an application's images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        width: usize,
        height: usize,
        channels: usize,
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        noise: f64,
        jitter: f64,
        family: PatternFamily,
    },
    /// `label,v0,v1,...` rows; relative paths resolve against the config file.
    Csv {
        path: PathBuf,
        width: usize,
        height: usize,
        channels: usize,
        classes: usize,
        test_fraction: f64,
    },
}

/// SGD settings without a seed; seeds come from the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

impl TrainSettings {
    fn with_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneSettings {
    pub accuracy_floor: f64,
    pub prune_fraction: f64,
    pub max_iterations: usize,
    pub min_filters_per_layer: usize,
    pub triplets: usize,
    pub ranking: Ranking,
    pub retrain: TrainSettings,
}

impl Default for PruneSettings {
    fn default() -> Self {
        let d = PruneConfig::default();
        Self {
            accuracy_floor: d.accuracy_floor,
            prune_fraction: d.prune_fraction,
            max_iterations: d.max_iterations,
            min_filters_per_layer: d.min_filters_per_layer,
            triplets: d.triplets,
            ranking: d.ranking,
            retrain: TrainSettings {
                epochs: d.retrain.epochs,
                ..TrainSettings::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub id: String,
    pub dataset: DatasetSource,
    pub network: NetworkSpec,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub prune: PruneSettings,
    #[serde(default = "default_recover")]
    pub recover: TrainSettings,
    pub min_accuracy: f64,
    /// Seconds per frame.
    pub max_latency: f64,
    pub alpha: f64,
    /// Baseline level; chosen from the profile when absent.
    #[serde(default)]
    pub knee_level: Option<usize>,
}

fn default_recover() -> TrainSettings {
    TrainSettings {
        epochs: RecoveryConfig::default().retrain.epochs,
        ..TrainSettings::default()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSettings {
    pub latency_model: LatencyModel,
    pub memory_mode: MemoryMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSettings {
    pub p_create: f64,
    pub p_kill: f64,
    pub min_concurrency: usize,
    pub max_concurrency: usize,
    pub initial: usize,
    pub duration: u64,
    pub repetitions: usize,
    pub input_fps: f64,
    pub caching: bool,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        let d = BenchmarkConfig::default();
        Self {
            p_create: d.p_create,
            p_kill: d.p_kill,
            min_concurrency: d.min_concurrency,
            max_concurrency: d.max_concurrency,
            initial: d.initial,
            duration: d.duration,
            repetitions: d.repetitions,
            input_fps: d.input_fps,
            caching: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub alphas: Vec<f64>,
    pub objectives: Vec<Objective>,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            alphas: vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            objectives: vec![Objective::MinTotalCost, Objective::MinMaxCost],
        }
    }
}

/// The whole pipeline configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub apps: Vec<AppConfig>,
    #[serde(default)]
    pub profile: ProfileSettings,
    #[serde(default)]
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub benchmark: BenchmarkSettings,
    #[serde(default)]
    pub sweep: SweepSettings,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = schema::from_str(text)?;
        schema::check_version(c.schema_version, CONFIG_SCHEMA_VERSION)?;
        c.validate()?;
        Ok(c)
    }

    /// Loads a config; CSV paths are made relative to the config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for app in &mut c.apps {
            if let DatasetSource::Csv { path, .. } = &mut app.dataset {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |field: String, message: String| Err(Error::Schema { field, message });
        if self.apps.is_empty() {
            return field("apps".into(), "at least one application is required".into());
        }
        for (i, app) in self.apps.iter().enumerate() {
            let at = |f: &str| format!("apps[{i}].{f}");
            if app.id.is_empty()
                || !app
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return field(at("id"), format!("`{}` is not a plain identifier", app.id));
            }
            if self.apps[..i].iter().any(|a| a.id == app.id) {
                return field(at("id"), format!("duplicate id `{}`", app.id));
            }
            if let Err(e) = app.network.validate() {
                return field(at("network"), e.to_string());
            }
            let (shape, classes) = app.dataset.shape();
            if shape != app.network.input || classes != app.network.classes {
                return field(
                    at("dataset"),
                    format!(
                        "{shape} with {classes} classes does not match the network ({} with {})",
                        app.network.input, app.network.classes
                    ),
                );
            }
            if let Err(e) = app.goals_check() {
                return field(at("min_accuracy"), e.to_string());
            }
            if let Err(e) = app.prune_config(0, 0).validate() {
                return field(at("prune"), e.to_string());
            }
            if let Some(0) = app.knee_level {
                return field(at("knee_level"), "levels start at 1".into());
            }
        }
        if let Err(e) = self.scheduler.validate() {
            return field("scheduler".into(), e.to_string());
        }
        if let Err(e) = self
            .benchmark_config(Vec::new())
            .validate_trace(self.apps.len())
        {
            return field("benchmark".into(), e.to_string());
        }
        if self.sweep.alphas.is_empty()
            || self.sweep.alphas.iter().any(|a| !(0.0..=1.0).contains(a))
        {
            return field(
                "sweep.alphas".into(),
                "non-empty list of values in [0, 1]".into(),
            );
        }
        if self.sweep.objectives.is_empty() {
            return field("sweep.objectives".into(), "at least one objective".into());
        }
        Ok(())
    }

    /// Scenario settings with the trace seed derived from `run_seed`; the
    /// catalog is filled in by the caller.
    pub fn benchmark_config(&self, catalog: Vec<crate::simulator::CatalogApp>) -> BenchmarkConfig {
        let b = &self.benchmark;
        BenchmarkConfig {
            catalog,
            p_create: b.p_create,
            p_kill: b.p_kill,
            min_concurrency: b.min_concurrency,
            max_concurrency: b.max_concurrency,
            initial: b.initial,
            duration: b.duration,
            repetitions: b.repetitions,
            seed: seed::derive(self.seed, &[purpose::TRACE]),
            input_fps: b.input_fps,
            scheduler: self.scheduler.clone(),
        }
    }

    /// Same config with a different run seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl DatasetSource {
    pub fn shape(&self) -> (TensorShape, usize) {
        match *self {
            Self::Synthetic {
                width,
                height,
                channels,
                classes,
                ..
            }
            | Self::Csv {
                width,
                height,
                channels,
                classes,
                ..
            } => (TensorShape::new(width, height, channels), classes),
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            &Self::Synthetic {
                width,
                height,
                channels,
                classes,
                train_per_class,
                test_per_class,
                noise,
                jitter,
                family,
            } => SyntheticSpec {
                width,
                height,
                channels,
                classes,
                train_per_class,
                test_per_class,
                noise,
                jitter,
                family,
                seed,
            }
            .generate(),
            Self::Csv {
                path,
                test_fraction,
                ..
            } => {
                let (shape, classes) = self.shape();
                Dataset::from_csv(path, shape, classes, *test_fraction, seed)
            }
        }
    }
}

/// Per-application seeds, all expanded from the run seed.
impl AppConfig {
    pub fn data_seed(run: u64, index: usize) -> u64 {
        seed::derive(run, &[purpose::DATA, index as u64])
    }

    pub fn init_seed(run: u64, index: usize) -> u64 {
        seed::derive(run, &[purpose::INIT, index as u64])
    }

    pub fn train_config(&self, run: u64, index: usize) -> TrainConfig {
        self.train
            .with_seed(seed::derive(run, &[purpose::TRAIN, index as u64]))
    }

    pub fn prune_config(&self, run: u64, index: usize) -> PruneConfig {
        let p = &self.prune;
        PruneConfig {
            accuracy_floor: p.accuracy_floor,
            prune_fraction: p.prune_fraction,
            max_iterations: p.max_iterations,
            min_filters_per_layer: p.min_filters_per_layer,
            triplets: p.triplets,
            ranking: p.ranking,
            retrain: p
                .retrain
                .with_seed(seed::derive(run, &[purpose::TRAIN, index as u64, 1])),
            seed: seed::derive(run, &[purpose::TRIPLETS, index as u64]),
        }
    }

    pub fn recovery_config(&self, run: u64, index: usize) -> RecoveryConfig {
        RecoveryConfig {
            retrain: self
                .recover
                .with_seed(seed::derive(run, &[purpose::TRAIN, index as u64, 2])),
            seed: seed::derive(run, &[purpose::GROW, index as u64]),
        }
    }

    fn goals_check(&self) -> Result<()> {
        crate::scheduler::AppGoals {
            app: self.id.clone(),
            min_accuracy: self.min_accuracy,
            max_latency: self.max_latency,
            alpha: self.alpha,
        }
        .validate()
    }
}
