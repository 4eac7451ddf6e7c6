//! Runtime allocation of compute share and descendant level to every
//! running application.
//!
//! The compute budget is split into `1 / quantum` indivisible quanta. Every
//! running application holds at least one quantum; the greedy schedulers
//! hand out the rest one quantum at a time.

mod agent;
mod exhaustive;
mod greedy;

use serde::{Deserialize, Serialize};

pub use agent::{CachedState, ScheduleAgent};
pub use exhaustive::{exhaustive_schedule, search_space_size};
pub use greedy::{resume_from_cache, schedule, schedule_min_max, schedule_min_total, GreedyRun};

use crate::error::{Error, Result};
use crate::profiling::ModelProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppGoals {
    pub app: String,
    /// Minimum acceptable accuracy (fraction).
    pub min_accuracy: f64,
    /// Maximum acceptable latency per frame (seconds).
    pub max_latency: f64,
    /// Weight of the latency penalty relative to the accuracy term.
    pub alpha: f64,
}

impl AppGoals {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{}: {what}", self.app)));
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return bad("min_accuracy must be in [0, 1]");
        }
        if !(self.max_latency.is_finite() && self.max_latency > 0.0) {
            return bad("max_latency must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must be in [0, 1]");
        }
        Ok(())
    }
}

/// What the scheduler needs to know about one descendant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelPoint {
    pub accuracy: f64,
    /// Seconds per frame with the whole processor.
    pub latency: f64,
    pub memory: u64,
}

/// A running application: its goals and the descendants it can run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tenant {
    pub goals: AppGoals,
    pub levels: Vec<LevelPoint>,
}

impl Tenant {
    pub fn from_profile(goals: AppGoals, profile: &ModelProfile) -> Self {
        Self {
            goals,
            levels: profile
                .levels
                .iter()
                .map(|l| LevelPoint {
                    accuracy: l.accuracy,
                    latency: l.latency,
                    memory: l.memory,
                })
                .collect(),
        }
    }

    pub fn cost(&self, level: usize, share: f64) -> Result<f64> {
        cost(&self.levels[level], share, &self.goals)
    }
}

/// Cost of running a descendant with compute share `share`: the accuracy
/// shortfall plus `alpha` times the latency overshoot.
pub fn cost(level: &LevelPoint, share: f64, goals: &AppGoals) -> Result<f64> {
    if !(share > 0.0 && share <= 1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "share must be in (0, 1], got {share}"
        )));
    }
    let latency = level.latency / share;
    Ok(
        (goals.min_accuracy - level.accuracy)
            + goals.alpha * (latency - goals.max_latency).max(0.0),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Minimize the sum of costs.
    #[default]
    MinTotalCost,
    /// Minimize the largest cost.
    MinMaxCost,
}

impl Objective {
    pub fn combine(self, costs: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            Self::MinTotalCost => costs.into_iter().sum(),
            Self::MinMaxCost => costs.into_iter().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    /// Indivisible compute quantum as a fraction of the processor.
    pub quantum: f64,
    /// Memory budget for all resident descendants (bytes).
    pub memory_budget: u64,
    /// Every `full_run_interval`-th scheduling event ignores the cache.
    pub full_run_interval: usize,
    /// Fraction of quanta allocated when the cached prefix is taken.
    pub cache_fraction: f64,
    /// Largest search space the exhaustive scheduler accepts.
    pub exhaustive_limit: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            quantum: 0.01,
            memory_budget: 400 * 1024 * 1024,
            full_run_interval: 10,
            cache_fraction: 0.7,
            exhaustive_limit: 50_000_000,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        self.total_quanta()?;
        if self.memory_budget == 0 {
            return Err(Error::InvalidArgument(
                "memory_budget must be positive".into(),
            ));
        }
        if self.full_run_interval == 0 {
            return Err(Error::InvalidArgument(
                "full_run_interval must be >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.cache_fraction) {
            return Err(Error::InvalidArgument(
                "cache_fraction must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Number of quanta in the whole processor; `1 / quantum` must be integral.
    pub fn total_quanta(&self) -> Result<usize> {
        let q = self.quantum;
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "quantum must be in (0, 1], got {q}"
            )));
        }
        let n = (1.0 / q).round();
        if (n * q - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "1 / quantum is not integral for {q}"
            )));
        }
        Ok(n as usize)
    }

    /// Quanta allocated when the cache snapshot is taken.
    pub fn cache_quanta(&self) -> Result<usize> {
        Ok((self.cache_fraction * self.total_quanta()? as f64).round() as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub app: String,
    /// 1-based descendant level.
    pub level: usize,
    pub quanta: usize,
    pub share: f64,
    pub cost: f64,
    pub memory: u64,
}

/// One greedy allocation step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub app: usize,
    pub level: usize,
    pub quanta: usize,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub objective_kind: Objective,
    pub assignments: Vec<Assignment>,
    /// Total cost, or the largest cost for the min-max objective.
    pub objective: f64,
    pub total_share: f64,
    pub total_memory: u64,
    pub feasible: bool,
    /// Quanta handed out by this invocation.
    pub steps: usize,
    pub resumed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceStep>>,
}

impl AllocationPlan {
    pub fn assignment(&self, app: &str) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.app == app)
    }
}

/// Level (0-based) and quanta held by every tenant.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub levels: Vec<usize>,
    pub quanta: Vec<usize>,
}

impl Allocation {
    pub fn allocated(&self) -> usize {
        self.quanta.iter().sum()
    }

    pub fn memory(&self, tenants: &[Tenant]) -> u64 {
        self.levels
            .iter()
            .zip(tenants)
            .map(|(&m, t)| t.levels[m].memory)
            .sum()
    }

    pub fn costs(&self, tenants: &[Tenant], total: usize) -> Result<Vec<f64>> {
        tenants
            .iter()
            .enumerate()
            .map(|(v, t)| t.cost(self.levels[v], self.quanta[v] as f64 / total as f64))
            .collect()
    }
}

fn validate_tenants(tenants: &[Tenant], cfg: &SchedulerConfig) -> Result<usize> {
    cfg.validate()?;
    let total = cfg.total_quanta()?;
    if tenants.is_empty() {
        return Err(Error::InvalidArgument("no running applications".into()));
    }
    for t in tenants {
        t.goals.validate()?;
        if t.levels.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} has no descendants",
                t.goals.app
            )));
        }
    }
    if tenants.len() > total {
        return Err(Error::InvalidArgument(format!(
            "{} applications cannot each hold one of {total} quanta",
            tenants.len()
        )));
    }
    let required: u64 = tenants.iter().map(|t| t.levels[0].memory).sum();
    if required > cfg.memory_budget {
        return Err(Error::ResourceInfeasible {
            apps: tenants.iter().map(|t| t.goals.app.clone()).collect(),
            required,
            budget: cfg.memory_budget,
        });
    }
    Ok(total)
}

/// Builds the public plan. Panics if the allocation breaks a hard
/// constraint, which would be a scheduler bug.
fn finish(
    tenants: &[Tenant],
    cfg: &SchedulerConfig,
    objective: Objective,
    alloc: &Allocation,
    steps: usize,
    resumed: bool,
    trace: Option<Vec<TraceStep>>,
) -> Result<AllocationPlan> {
    let total = cfg.total_quanta()?;
    let costs = alloc.costs(tenants, total)?;
    let total_memory = alloc.memory(tenants);
    let allocated = alloc.allocated();
    let feasible = allocated <= total
        && total_memory <= cfg.memory_budget
        && alloc.quanta.iter().all(|&q| q >= 1);
    assert!(
        feasible,
        "scheduler produced an infeasible plan: {allocated}/{total} quanta, {total_memory}/{} bytes",
        cfg.memory_budget
    );
    Ok(AllocationPlan {
        objective_kind: objective,
        assignments: tenants
            .iter()
            .enumerate()
            .map(|(v, t)| Assignment {
                app: t.goals.app.clone(),
                level: alloc.levels[v] + 1,
                quanta: alloc.quanta[v],
                share: alloc.quanta[v] as f64 / total as f64,
                cost: costs[v],
                memory: t.levels[alloc.levels[v]].memory,
            })
            .collect(),
        objective: objective.combine(costs.iter().copied()),
        total_share: allocated as f64 / total as f64,
        total_memory,
        feasible,
        steps,
        resumed,
        trace,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn goals(app: &str, min_accuracy: f64, max_latency: f64, alpha: f64) -> AppGoals {
        AppGoals {
            app: app.into(),
            min_accuracy,
            max_latency,
            alpha,
        }
    }

    pub fn point(accuracy: f64, latency: f64, memory: u64) -> LevelPoint {
        LevelPoint {
            accuracy,
            latency,
            memory,
        }
    }

    #[test]
    fn cost_examples() {
        let g = goals("a", 0.9, 0.15, 0.5);
        let c = cost(&point(0.85, 0.1, 1), 0.5, &g).unwrap();
        assert!((c - 0.075).abs() < 1e-12);
        let g = goals("a", 0.85, 0.25, 0.5);
        assert_eq!(cost(&point(0.85, 0.1, 1), 0.5, &g).unwrap(), 0.0);
        let g = goals("a", 0.9, 0.01, 0.0);
        let a = cost(&point(0.7, 0.1, 1), 0.1, &g).unwrap();
        let b = cost(&point(0.7, 0.1, 1), 1.0, &g).unwrap();
        assert_eq!(a, b);
        assert!((a - 0.2).abs() < 1e-12);
        assert!(cost(&point(0.7, 0.1, 1), 0.0, &g).is_err());
    }

    #[test]
    fn config_checks_quantum() {
        let mut c = SchedulerConfig::default();
        assert_eq!(c.total_quanta().unwrap(), 100);
        assert_eq!(c.cache_quanta().unwrap(), 70);
        c.quantum = 0.3;
        assert!(c.validate().is_err());
        c.quantum = 0.25;
        assert_eq!(c.total_quanta().unwrap(), 4);
    }
}
