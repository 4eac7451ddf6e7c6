use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{AppConfig, PipelineConfig};
use super::manifest::{sha256_bytes, timestamp, ArtifactRef, RunManifest, MANIFEST_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::nn::{accuracy, forward, network_flops, train, Checkpoint, ParamStore};
use crate::profiling::{knee_level, profile_model, LatencyModel, ModelProfile};
use crate::pruning::{iterative_prune, PruningRoadmap};
use crate::recovery::{GrowReport, MultiCapacityModel, RetrainReport};
use crate::scheduler::{
    exhaustive_schedule, schedule, AllocationPlan, AppGoals, Objective, SchedulerConfig, Tenant,
};
use crate::schema;
use crate::simulator::{
    compare, generate_traces, simulate_many, sweep_alpha, AlphaSweep, BenchmarkTrace, CatalogApp,
    Comparison, Scheme, SimMetrics,
};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Pipeline commands in execution order.
pub const COMMANDS: [&str; 7] = [
    "train", "prune", "recover", "profile", "schedule", "simulate", "report",
];

/// Process exit status for an error: 2 schema or artifact problems,
/// 3 resource infeasibility, 4 numeric failure, 1 anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema { .. } | Error::Json(_) | Error::Format(_) | Error::ProfileInvariant(_) => 2,
        Error::ResourceInfeasible { .. } => 3,
        Error::Numeric(_) => 4,
        _ => 1,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainReport {
    pub schema_version: u32,
    pub app: String,
    pub manifest: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub epochs_run: usize,
    pub epoch_losses: Vec<f64>,
    pub param_count: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverReport {
    pub schema_version: u32,
    pub app: String,
    pub manifest: String,
    pub levels: usize,
    /// Parameter bytes of each descendant.
    pub level_sizes: Vec<u64>,
    /// Parameter bytes stored in the multi-capacity file.
    pub stored_bytes: u64,
    /// What storing every descendant separately would take.
    pub separate_bytes: u64,
    pub accuracies: Vec<f64>,
    pub grows: Vec<GrowReport>,
    pub retrains: Vec<RetrainReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestApp {
    /// Profile file, relative to the request file.
    pub profile: PathBuf,
    pub min_accuracy: f64,
    pub max_latency: f64,
    pub alpha: f64,
}

/// Ad hoc scheduling input for `schedule --request`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRequest {
    pub schema_version: u32,
    pub apps: Vec<RequestApp>,
    #[serde(default)]
    pub objective: Option<Objective>,
    #[serde(default)]
    pub scheduler: Option<SchedulerConfig>,
}

/// Greedy plan checked against the exhaustive optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    /// Quantum both searches used; coarser than configured when the
    /// configured grid is too large to enumerate.
    pub quantum: f64,
    pub greedy_objective: f64,
    pub optimal_objective: f64,
    pub optimum: AllocationPlan,
    /// Greedy minus optimal objective.
    pub gap: f64,
    pub within_ten_percent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPlan {
    pub objective: Objective,
    pub plan: AllocationPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResponse {
    pub schema_version: u32,
    pub manifest: String,
    pub scheduler: SchedulerConfig,
    pub plans: Vec<ScheduledPlan>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub schema_version: u32,
    pub manifest: String,
    pub traces: Vec<BenchmarkTrace>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub manifest: String,
    pub baseline: SimMetrics,
    /// Resource-aware runs with every application's own alpha.
    pub runs: Vec<SimMetrics>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub manifest: String,
    pub sweeps: Vec<AlphaSweep>,
}

fn app_path(app: &str, file: &str) -> String {
    format!("apps/{app}/{file}")
}

/// One configured run of the pipeline over an output directory.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: PipelineConfig,
    config_ref: ArtifactRef,
    pub out: PathBuf,
    /// Run seed: the config's unless overridden.
    pub seed: u64,
    /// Verify bit-exact extraction and freezing; refuse wall-clock latency.
    pub strict: bool,
    /// Check every greedy plan against the exhaustive optimum.
    pub oracle: bool,
}

impl Pipeline {
    pub fn open(
        config_path: impl AsRef<Path>,
        out: impl AsRef<Path>,
        seed: Option<u64>,
    ) -> Result<Self> {
        let path = config_path.as_ref();
        let config = PipelineConfig::load(path)?;
        let config_ref = ArtifactRef::of(path, path.display().to_string())?;
        Ok(Self::build(config, config_ref, out.as_ref(), seed))
    }

    /// A pipeline over an in-memory config.
    pub fn new(config: PipelineConfig, out: impl AsRef<Path>) -> Result<Self> {
        config.validate()?;
        let config_ref = ArtifactRef {
            path: "<memory>".into(),
            sha256: sha256_bytes(schema::to_string(&config)?.as_bytes()),
        };
        Ok(Self::build(config, config_ref, out.as_ref(), None))
    }

    fn build(
        config: PipelineConfig,
        config_ref: ArtifactRef,
        out: &Path,
        seed: Option<u64>,
    ) -> Self {
        let seed = seed.unwrap_or(config.seed);
        Self {
            config: config.with_seed(seed),
            config_ref,
            out: out.to_path_buf(),
            seed,
            strict: false,
            oracle: false,
        }
    }

    pub fn with_strict(mut self, on: bool) -> Self {
        self.strict = on;
        self
    }

    pub fn with_oracle(mut self, on: bool) -> Self {
        self.oracle = on;
        self
    }

    /// Runs every command in order.
    pub fn run_all(&self) -> Result<String> {
        self.train()?;
        self.prune()?;
        self.recover()?;
        self.profile()?;
        self.schedule(None)?;
        self.simulate()?;
        self.report(None)
    }

    fn run<T>(&self, command: &'static str, body: impl FnOnce(&mut Run) -> Result<T>) -> Result<T> {
        let mut run = Run {
            out: &self.out,
            command,
            started: timestamp(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            written: Vec::new(),
            seed: self.seed,
        };
        match body(&mut run) {
            Ok(v) => {
                run.finish(self)?;
                Ok(v)
            }
            Err(e) => {
                run.abort();
                Err(e)
            }
        }
    }

    fn dataset(&self, i: usize) -> Result<crate::nn::Dataset> {
        self.config.apps[i]
            .dataset
            .load(AppConfig::data_seed(self.seed, i))
    }

    /// Trains every application's vanilla model.
    pub fn train(&self) -> Result<Vec<TrainReport>> {
        self.run("train", |run| {
            let mut reports = Vec::new();
            for (i, app) in self.config.apps.iter().enumerate() {
                let ds = self.dataset(i)?;
                let net = app.network.clone();
                let init = AppConfig::init_seed(self.seed, i);
                let mut params = ParamStore::init(&net, init);
                let stats = train(
                    &net,
                    &mut params,
                    &ds.train,
                    &app.train_config(self.seed, i),
                    None,
                    |_, _| Ok(false),
                )?;
                let report = TrainReport {
                    schema_version: ARTIFACT_SCHEMA_VERSION,
                    app: app.id.clone(),
                    manifest: run.manifest_ref(),
                    train_accuracy: accuracy(&net, &params, &ds.train)?,
                    test_accuracy: accuracy(&net, &params, &ds.test)?,
                    epochs_run: stats.epochs_run,
                    epoch_losses: stats.epoch_losses,
                    param_count: net.param_count() as u64,
                    flops: network_flops(&net)?,
                };
                let ckpt = Checkpoint {
                    net,
                    params,
                    seed: init,
                };
                run.write(&app_path(&app.id, "vanilla.ckpt"), &ckpt.to_bytes()?)?;
                run.write_json(&app_path(&app.id, "train.json"), &report)?;
                reports.push(report);
            }
            Ok(reports)
        })
    }

    /// Iteratively prunes every vanilla model and records its roadmap.
    pub fn prune(&self) -> Result<Vec<PruningRoadmap>> {
        self.run("prune", |run| {
            let mut roadmaps = Vec::new();
            for (i, app) in self.config.apps.iter().enumerate() {
                let vanilla_rel = app_path(&app.id, "vanilla.ckpt");
                let vanilla = Checkpoint::load(run.upstream("train", &vanilla_rel)?)?;
                if vanilla.net != app.network {
                    return Err(Error::Format(format!(
                        "{vanilla_rel} does not match the configured network; re-run `train`"
                    )));
                }
                let ds = self.dataset(i)?;
                let outcome = iterative_prune(
                    &vanilla.net,
                    &vanilla.params,
                    &ds,
                    &app.prune_config(self.seed, i),
                )?;
                let seed_rel = app_path(&app.id, "seed.ckpt");
                let mut roadmap = outcome.roadmap;
                roadmap.vanilla_checkpoint = Some(vanilla_rel);
                roadmap.seed_checkpoint = Some(seed_rel.clone());
                roadmap.manifest = Some(run.manifest_ref());
                let seed_model = Checkpoint {
                    net: outcome.net,
                    params: outcome.params,
                    seed: vanilla.seed,
                };
                run.write(&seed_rel, &seed_model.to_bytes()?)?;
                run.write(
                    &app_path(&app.id, "roadmap.json"),
                    roadmap.to_json()?.as_bytes(),
                )?;
                roadmaps.push(roadmap);
            }
            Ok(roadmaps)
        })
    }

    /// Grows every seed model back along its roadmap into a multi-capacity model.
    pub fn recover(&self) -> Result<Vec<RecoverReport>> {
        self.run("recover", |run| {
            let mut reports = Vec::new();
            for (i, app) in self.config.apps.iter().enumerate() {
                let seed_model =
                    Checkpoint::load(run.upstream("prune", &app_path(&app.id, "seed.ckpt"))?)?;
                let roadmap = PruningRoadmap::load(
                    run.upstream("prune", &app_path(&app.id, "roadmap.json"))?,
                )?;
                let ds = self.dataset(i)?;
                let cfg = app.recovery_config(self.seed, i);
                let mut model = MultiCapacityModel::from_seed(
                    &seed_model.net,
                    &seed_model.params,
                    &roadmap,
                    cfg.seed,
                )?;
                model.accuracies[0] =
                    Some(accuracy(&seed_model.net, &seed_model.params, &ds.test)?);
                let mut grows = Vec::new();
                let mut retrains = Vec::new();
                for _ in 0..roadmap.records.len() {
                    let g = model.grow(&roadmap)?;
                    let level = g.level;
                    grows.push(g);
                    let before = model.params.clone();
                    retrains.push(model.retrain_level(level, &ds, &cfg.retrain)?);
                    if self.strict {
                        check_frozen(&model, &before, level)?;
                    }
                }
                model.mask.check_nesting(model.levels)?;
                if self.strict {
                    check_extraction(&model, &ds.test)?;
                }
                let level_sizes = model.level_sizes()?;
                let report = RecoverReport {
                    schema_version: ARTIFACT_SCHEMA_VERSION,
                    app: app.id.clone(),
                    manifest: run.manifest_ref(),
                    levels: model.levels,
                    stored_bytes: model.payload_bytes()?,
                    separate_bytes: level_sizes.iter().sum(),
                    level_sizes,
                    accuracies: model
                        .accuracies
                        .iter()
                        .map(|a| a.unwrap_or(f64::NAN))
                        .collect(),
                    grows,
                    retrains,
                };
                run.write(&app_path(&app.id, "multicap.bin"), &model.to_bytes()?)?;
                run.write_json(&app_path(&app.id, "recover.json"), &report)?;
                reports.push(report);
            }
            Ok(reports)
        })
    }

    /// Profiles every level of every multi-capacity model.
    pub fn profile(&self) -> Result<Vec<ModelProfile>> {
        let latency = self.config.profile.latency_model;
        if self.strict && matches!(latency, LatencyModel::Measured { .. }) {
            return Err(Error::InvalidArgument(
                "strict mode needs the flops_throughput latency model; wall-clock timings are not reproducible".into(),
            ));
        }
        self.run("profile", |run| {
            let mut profiles = Vec::new();
            for (i, app) in self.config.apps.iter().enumerate() {
                let bytes =
                    std::fs::read(run.upstream("recover", &app_path(&app.id, "multicap.bin"))?)?;
                let model = MultiCapacityModel::from_bytes(&bytes)?;
                let ds = self.dataset(i)?;
                let mut profile = profile_model(
                    &app.id,
                    &model,
                    &ds.test,
                    &latency,
                    self.config.profile.memory_mode,
                )?;
                profile.manifest = Some(run.manifest_ref());
                run.write(
                    &app_path(&app.id, "profile.json"),
                    profile.to_json()?.as_bytes(),
                )?;
                profiles.push(profile);
            }
            Ok(profiles)
        })
    }

    fn load_profiles(&self, run: &mut Run) -> Result<Vec<ModelProfile>> {
        self.config
            .apps
            .iter()
            .map(|app| {
                let profile = ModelProfile::load(
                    run.upstream("profile", &app_path(&app.id, "profile.json"))?,
                )?;
                if profile.app != app.id {
                    return Err(Error::Format(format!(
                        "profile of `{}` is labelled `{}`",
                        app.id, profile.app
                    )));
                }
                Ok(profile)
            })
            .collect()
    }

    /// Plans one allocation for all configured applications running at
    /// once, or for the applications of `request`.
    pub fn schedule(&self, request: Option<&Path>) -> Result<ScheduleResponse> {
        self.run("schedule", |run| {
            let (tenants, objectives, cfg) = match request {
                Some(path) => {
                    let req: ScheduleRequest = schema::read(path)?;
                    schema::check_version(req.schema_version, ARTIFACT_SCHEMA_VERSION)?;
                    run.inputs
                        .push(ArtifactRef::of(path, path.display().to_string())?);
                    let base = path.parent().unwrap_or(Path::new("."));
                    let mut tenants = Vec::new();
                    for a in &req.apps {
                        let file = base.join(&a.profile);
                        let profile = ModelProfile::load(&file)?;
                        run.inputs
                            .push(ArtifactRef::of(&file, file.display().to_string())?);
                        let goals = AppGoals {
                            app: profile.app.clone(),
                            min_accuracy: a.min_accuracy,
                            max_latency: a.max_latency,
                            alpha: a.alpha,
                        };
                        goals.validate()?;
                        tenants.push(Tenant::from_profile(goals, &profile));
                    }
                    let objectives = req
                        .objective
                        .map_or_else(|| self.config.sweep.objectives.clone(), |o| vec![o]);
                    (
                        tenants,
                        objectives,
                        req.scheduler
                            .unwrap_or_else(|| self.config.scheduler.clone()),
                    )
                }
                None => {
                    let profiles = self.load_profiles(run)?;
                    let tenants = self
                        .config
                        .apps
                        .iter()
                        .zip(&profiles)
                        .map(|(app, p)| {
                            let goals = AppGoals {
                                app: app.id.clone(),
                                min_accuracy: app.min_accuracy,
                                max_latency: app.max_latency,
                                alpha: app.alpha,
                            };
                            Tenant::from_profile(goals, p)
                        })
                        .collect();
                    (
                        tenants,
                        self.config.sweep.objectives.clone(),
                        self.config.scheduler.clone(),
                    )
                }
            };
            cfg.validate()?;
            let mut plans = Vec::new();
            for objective in objectives {
                let plan = schedule(&tenants, &cfg, objective, false)?.plan;
                let oracle = if self.oracle {
                    Some(oracle_check(&tenants, &cfg, objective)?)
                } else {
                    None
                };
                plans.push(ScheduledPlan {
                    objective,
                    plan,
                    oracle,
                });
            }
            let response = ScheduleResponse {
                schema_version: ARTIFACT_SCHEMA_VERSION,
                manifest: run.manifest_ref(),
                scheduler: cfg,
                plans,
            };
            run.write_json("schedule.json", &response)?;
            Ok(response)
        })
    }

    /// The benchmark catalog built from the profiles on disk.
    pub fn catalog(&self) -> Result<Vec<CatalogApp>> {
        let mut scratch = Run {
            out: &self.out,
            command: "catalog",
            started: 0,
            inputs: Vec::new(),
            outputs: Vec::new(),
            written: Vec::new(),
            seed: self.seed,
        };
        self.build_catalog(&mut scratch)
    }

    fn build_catalog(&self, run: &mut Run) -> Result<Vec<CatalogApp>> {
        let profiles = self.load_profiles(run)?;
        Ok(self
            .config
            .apps
            .iter()
            .zip(profiles)
            .map(|(app, profile)| CatalogApp {
                id: app.id.clone(),
                min_accuracy: app.min_accuracy,
                max_latency: app.max_latency,
                alpha: app.alpha,
                knee_level: app.knee_level.unwrap_or_else(|| knee_level(&profile)),
                profile,
            })
            .collect())
    }

    /// Generates the benchmark traces and replays them under the baseline,
    /// each objective, and the alpha sweep.
    pub fn simulate(&self) -> Result<(MetricsReport, SweepReport)> {
        self.run("simulate", |run| {
            let cfg = self.config.benchmark_config(self.build_catalog(run)?);
            cfg.validate()?;
            let traces = generate_traces(&cfg.app_ids(), &cfg)?;
            let manifest = run.manifest_ref();
            run.write_json(
                "traces.json",
                &TraceSet {
                    schema_version: ARTIFACT_SCHEMA_VERSION,
                    manifest: manifest.clone(),
                    traces: traces.clone(),
                },
            )?;
            let caching = self.config.benchmark.caching;
            let baseline = simulate_many(&traces, &cfg, Scheme::Baseline, true)?;
            let mut runs = Vec::new();
            let mut sweeps = Vec::new();
            for &objective in &self.config.sweep.objectives {
                let scheme = Scheme::ResourceAware {
                    objective,
                    caching,
                    alpha: None,
                };
                runs.push(simulate_many(&traces, &cfg, scheme, true)?);
                sweeps.push(sweep_alpha(
                    &traces,
                    &cfg,
                    &self.config.sweep.alphas,
                    objective,
                    caching,
                )?);
            }
            let metrics = MetricsReport {
                schema_version: ARTIFACT_SCHEMA_VERSION,
                manifest: manifest.clone(),
                comparisons: runs.iter().map(|m| compare(m, &baseline)).collect(),
                baseline,
                runs,
            };
            let sweep = SweepReport {
                schema_version: ARTIFACT_SCHEMA_VERSION,
                manifest,
                sweeps,
            };
            run.write_json("metrics.json", &metrics)?;
            run.write_json("sweep.json", &sweep)?;
            Ok((metrics, sweep))
        })
    }

    /// Renders the simulation results as markdown tables plus a CSV of the
    /// alpha sweep. With `metrics` given, reads that file instead of the
    /// pipeline's own output and skips the sweep.
    pub fn report(&self, metrics: Option<&Path>) -> Result<String> {
        self.run("report", |run| {
            let (metrics, sweep): (MetricsReport, Option<SweepReport>) = match metrics {
                Some(path) => {
                    run.inputs
                        .push(ArtifactRef::of(path, path.display().to_string())?);
                    (read_versioned(path)?, None)
                }
                None => {
                    let m = read_versioned(&run.upstream("simulate", "metrics.json")?)?;
                    let s = read_versioned(&run.upstream("simulate", "sweep.json")?)?;
                    (m, Some(s))
                }
            };
            let text = render_report(&metrics, sweep.as_ref());
            run.write("report.md", text.as_bytes())?;
            if let Some(s) = &sweep {
                run.write("sweep.csv", sweep_csv(s).as_bytes())?;
            }
            Ok(text)
        })
    }
}

fn read_versioned<T: serde::de::DeserializeOwned + HasVersion>(path: &Path) -> Result<T> {
    let v: T = schema::read(path)?;
    schema::check_version(v.version(), ARTIFACT_SCHEMA_VERSION)?;
    Ok(v)
}

trait HasVersion {
    fn version(&self) -> u32;
}

impl HasVersion for MetricsReport {
    fn version(&self) -> u32 {
        self.schema_version
    }
}

impl HasVersion for SweepReport {
    fn version(&self) -> u32 {
        self.schema_version
    }
}

/// Exhaustive check of a greedy plan, on the configured grid when it is
/// small enough and otherwise on the finest of 0.05 and 0.1 that is.
fn oracle_check(
    tenants: &[Tenant],
    cfg: &SchedulerConfig,
    objective: Objective,
) -> Result<OracleCheck> {
    let mut last = None;
    for quantum in [cfg.quantum, 0.05, 0.1] {
        if quantum < cfg.quantum {
            continue;
        }
        let grid = SchedulerConfig {
            quantum,
            ..cfg.clone()
        };
        match exhaustive_schedule(tenants, &grid, objective) {
            Ok(optimum) => {
                let greedy = schedule(tenants, &grid, objective, false)?.plan;
                let gap = greedy.objective - optimum.objective;
                return Ok(OracleCheck {
                    quantum,
                    greedy_objective: greedy.objective,
                    optimal_objective: optimum.objective,
                    within_ten_percent: gap <= 0.1 * optimum.objective.abs() + 1e-12,
                    gap,
                    optimum,
                });
            }
            Err(e @ Error::InstanceTooLarge { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one grid tried"))
}

/// Parameters introduced below `level` must be bit-identical to `before`.
fn check_frozen(model: &MultiCapacityModel, before: &ParamStore, level: usize) -> Result<()> {
    let levels = model.param_levels()?;
    let changed = levels
        .values()
        .zip(model.params.values().zip(before.values()))
        .filter(|&(l, (a, b))| l >= 1 && l < level && a.to_bits() != b.to_bits())
        .count();
    if changed > 0 {
        return Err(Error::Numeric(format!(
            "{changed} frozen parameters changed while retraining level {level}"
        )));
    }
    Ok(())
}

/// Masked inference on the shared store must bit-match every extracted descendant.
fn check_extraction(model: &MultiCapacityModel, samples: &[crate::nn::Sample]) -> Result<()> {
    for level in 1..=model.levels {
        let (net, params) = model.extract_descendant(level)?;
        for (k, s) in samples.iter().enumerate() {
            let masked = model.forward_masked(level, &s.image)?;
            let extracted = forward(&net, &params, &s.image)?;
            let same = masked
                .probabilities()
                .iter()
                .map(|v| v.to_bits())
                .eq(extracted.probabilities().iter().map(|v| v.to_bits()));
            if !same {
                return Err(Error::Numeric(format!(
                    "level {level}: masked and extracted outputs differ on test sample {k}"
                )));
            }
        }
    }
    Ok(())
}

fn scheme_label(scheme: &Scheme) -> String {
    match scheme {
        Scheme::Baseline => "baseline".into(),
        Scheme::ResourceAware {
            objective,
            caching,
            alpha,
        } => {
            let mut s = objective_label(*objective).to_string();
            if let Some(a) = alpha {
                let _ = write!(s, " alpha={a}");
            }
            if *caching {
                s.push_str(" +cache");
            }
            s
        }
    }
}

fn objective_label(o: Objective) -> &'static str {
    match o {
        Objective::MinTotalCost => "min_total_cost",
        Objective::MinMaxCost => "min_max_cost",
    }
}

fn render_report(metrics: &MetricsReport, sweep: Option<&SweepReport>) -> String {
    let mut s = String::new();
    let b = &metrics.baseline;
    let _ = writeln!(s, "# Benchmark report\n");
    let _ = writeln!(s, "{} traces.\n", b.traces);
    let _ = writeln!(s, "## Schemes\n");
    let _ = writeln!(
        s,
        "| scheme | accuracy | frame-weighted accuracy | frame rate (fps) | accuracy gain (pp) | speedup | paged bytes | independent paged bytes | scheduler invocations | allocation steps | rejected creates |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|---|---|---|");
    let rows = std::iter::once((b, compare(b, b)))
        .chain(metrics.runs.iter().zip(metrics.comparisons.iter().cloned()));
    for (m, c) in rows.clone() {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:.4} | {:.3} | {:.3} | {:.3}x | {} | {} | {} | {} | {} |",
            scheme_label(&m.scheme),
            m.accuracy,
            m.frame_weighted_accuracy,
            m.frame_rate,
            c.accuracy_gain,
            c.speedup,
            m.paged_bytes(),
            m.independent_paged_bytes(),
            m.scheduler_invocations,
            m.allocation_steps,
            m.rejected_creates
        );
    }
    let _ = writeln!(s, "\n## Per application\n");
    let _ = writeln!(
        s,
        "| scheme | app | running seconds | accuracy | frame rate (fps) |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|");
    for (m, _) in rows {
        for a in &m.apps {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.4} | {:.3} |",
                scheme_label(&m.scheme),
                a.app,
                a.running_seconds,
                a.accuracy,
                a.frame_rate
            );
        }
    }
    if let Some(sweep) = sweep {
        for sw in &sweep.sweeps {
            let _ = writeln!(s, "\n## Alpha sweep, {}\n", objective_label(sw.objective));
            let _ = writeln!(
                s,
                "Baseline: accuracy {:.4}, frame rate {:.3} fps, paged bytes {}.\n",
                sw.baseline_accuracy, sw.baseline_frame_rate, sw.baseline_paged_bytes
            );
            let _ = writeln!(s, "| alpha | accuracy | frame rate (fps) | accuracy gain (pp) | speedup | paged bytes | dominates baseline |");
            let _ = writeln!(s, "|---|---|---|---|---|---|---|");
            for (i, p) in sw.points.iter().enumerate() {
                let knee = if i == sw.knee { " (knee)" } else { "" };
                let _ = writeln!(
                    s,
                    "| {}{knee} | {:.4} | {:.3} | {:.3} | {:.3}x | {} | {} |",
                    p.alpha,
                    p.accuracy,
                    p.frame_rate,
                    p.accuracy_gain,
                    p.speedup,
                    p.paged_bytes,
                    p.dominates_baseline
                );
            }
            let _ = writeln!(
                s,
                "\nKendall tau vs alpha: accuracy {:.3}, frame rate {:.3}; monotone trend: {}.",
                sw.trend.accuracy_tau, sw.trend.frame_rate_tau, sw.trend.monotone
            );
        }
    }
    s
}

fn sweep_csv(sweep: &SweepReport) -> String {
    let mut s = String::from(
        "objective,alpha,accuracy,frame_rate,accuracy_gain_pp,speedup,paged_bytes,independent_paged_bytes,dominates_baseline,knee\n",
    );
    for sw in &sweep.sweeps {
        let o = objective_label(sw.objective);
        let _ = writeln!(
            s,
            "{o},baseline,{},{},0,1,{},{},,",
            sw.baseline_accuracy,
            sw.baseline_frame_rate,
            sw.baseline_paged_bytes,
            sw.baseline_paged_bytes
        );
        for (i, p) in sw.points.iter().enumerate() {
            let _ = writeln!(
                s,
                "{o},{},{},{},{},{},{},{},{},{}",
                p.alpha,
                p.accuracy,
                p.frame_rate,
                p.accuracy_gain,
                p.speedup,
                p.paged_bytes,
                p.independent_paged_bytes,
                p.dominates_baseline,
                i == sw.knee
            );
        }
    }
    s
}

/// Bookkeeping for one command: inputs read, outputs written, and cleanup
/// of partial outputs on failure.
struct Run<'a> {
    out: &'a Path,
    command: &'static str,
    started: u64,
    inputs: Vec<ArtifactRef>,
    outputs: Vec<ArtifactRef>,
    written: Vec<PathBuf>,
    seed: u64,
}

impl Run<'_> {
    fn manifest_ref(&self) -> String {
        RunManifest::relative(self.command)
    }

    /// Full path of `rel`, after checking it is what `command` last wrote.
    fn upstream(&mut self, command: &str, rel: &str) -> Result<PathBuf> {
        let manifest = RunManifest::load(self.out, command)?;
        let r = manifest.verify_output(self.out, rel, self.seed)?;
        if !self.inputs.contains(&r) {
            self.inputs.push(r);
        }
        Ok(self.out.join(rel))
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, bytes)?;
        self.written.push(tmp.clone());
        std::fs::rename(&tmp, &path)?;
        self.written.pop();
        self.written.push(path);
        self.outputs.push(ArtifactRef {
            path: rel.to_string(),
            sha256: sha256_bytes(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.write(rel, schema::to_string(value)?.as_bytes())
    }

    fn finish(self, p: &Pipeline) -> Result<()> {
        RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: self.command.to_string(),
            config: p.config_ref.clone(),
            seed: self.seed,
            strict: p.strict,
            oracle: p.oracle,
            inputs: self.inputs,
            outputs: self.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started: self.started,
            finished: timestamp(),
        }
        .save(self.out)
    }

    fn abort(self) {
        for path in &self.written {
            let _ = std::fs::remove_file(path);
        }
    }
}
