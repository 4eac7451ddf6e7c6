//! Benchmark traces of application arrivals and departures, replayed
//! against the resource-aware scheduler and a fixed-model baseline.

mod engine;
mod sweep;
mod trace;

use serde::{Deserialize, Serialize};

pub use engine::{
    compare, simulate, simulate_baseline, simulate_many, AppMetrics, Comparison, EventLog, Scheme,
    SimMetrics, METRICS_SCHEMA_VERSION,
};
pub use sweep::{kendall_tau, select_knee, sweep_alpha, AlphaSweep, SweepPoint, Trend};
pub use trace::{
    generate_trace, generate_traces, BenchmarkTrace, EventKind, TraceEvent, TRACE_SCHEMA_VERSION,
};

use crate::error::{Error, Result};
use crate::profiling::ModelProfile;
use crate::scheduler::{AppGoals, SchedulerConfig, Tenant};

/// An application that the benchmark may launch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogApp {
    pub id: String,
    pub min_accuracy: f64,
    pub max_latency: f64,
    pub alpha: f64,
    /// Level the fixed-model baseline always runs.
    pub knee_level: usize,
    pub profile: ModelProfile,
}

impl CatalogApp {
    pub fn goals(&self, alpha: Option<f64>) -> AppGoals {
        AppGoals {
            app: self.id.clone(),
            min_accuracy: self.min_accuracy,
            max_latency: self.max_latency,
            alpha: alpha.unwrap_or(self.alpha),
        }
    }

    pub fn tenant(&self, alpha: Option<f64>) -> Tenant {
        Tenant::from_profile(self.goals(alpha), &self.profile)
    }

    /// Parameter bytes resident at each level.
    pub fn level_sizes(&self) -> Vec<u64> {
        self.profile.levels.iter().map(|l| l.param_bytes).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub catalog: Vec<CatalogApp>,
    /// Per-second probability of launching an application.
    pub p_create: f64,
    /// Per-second probability of stopping one.
    pub p_kill: f64,
    pub min_concurrency: usize,
    pub max_concurrency: usize,
    /// Applications launched at time zero.
    pub initial: usize,
    /// Trace length in seconds.
    pub duration: u64,
    pub repetitions: usize,
    pub seed: u64,
    /// Camera frame rate; no app can process faster than this.
    pub input_fps: f64,
    pub scheduler: SchedulerConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            catalog: Vec::new(),
            p_create: 0.35,
            p_kill: 0.2,
            min_concurrency: 2,
            max_concurrency: 6,
            initial: 2,
            duration: 60,
            repetitions: 100,
            seed: 0,
            input_fps: 30.0,
            scheduler: SchedulerConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn app_ids(&self) -> Vec<String> {
        self.catalog.iter().map(|a| a.id.clone()).collect()
    }

    pub fn app(&self, id: &str) -> Result<&CatalogApp> {
        self.catalog
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown application {id}")))
    }

    /// Checks the parts of the configuration that trace generation uses,
    /// for a catalog of `n` applications.
    pub fn validate_trace(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(1 <= self.min_concurrency
            && self.min_concurrency <= self.max_concurrency
            && self.max_concurrency <= n)
        {
            return bad(format!(
                "concurrency bounds [{}, {}] must lie within [1, {n}]",
                self.min_concurrency, self.max_concurrency
            ));
        }
        if !(self.min_concurrency..=self.max_concurrency).contains(&self.initial) {
            return bad(format!(
                "initial count {} outside the concurrency bounds",
                self.initial
            ));
        }
        let probs = [self.p_create, self.p_kill];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || self.p_create + self.p_kill > 1.0 {
            return bad("p_create and p_kill must be probabilities summing to at most 1".into());
        }
        if self.duration == 0 {
            return bad("duration must be positive".into());
        }
        if !(self.input_fps.is_finite() && self.input_fps > 0.0) {
            return bad("input_fps must be positive".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_trace(self.catalog.len())?;
        for (i, a) in self.catalog.iter().enumerate() {
            if self.catalog[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate application {}",
                    a.id
                )));
            }
            a.goals(None).validate()?;
            a.profile.validate()?;
            if a.knee_level == 0 || a.knee_level > a.profile.levels.len() {
                return Err(Error::LevelOutOfRange {
                    level: a.knee_level,
                    levels: a.profile.levels.len(),
                });
            }
        }
        self.scheduler.validate()
    }
}
