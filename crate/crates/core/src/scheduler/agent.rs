use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::greedy::{resume_from_cache, schedule};
use super::{Allocation, AllocationPlan, Objective, SchedulerConfig, Tenant};
use crate::error::Result;

/// Partial allocation kept between scheduling events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CachedState {
    pub apps: Vec<String>,
    /// Fingerprint of the tenants' level profiles when the cache was taken.
    pub fingerprint: u64,
    pub prefix: Allocation,
    /// Events answered from the cache since the last full run.
    pub events_since_full: usize,
}

pub fn fingerprint(tenants: &[Tenant]) -> u64 {
    let mut h = DefaultHasher::new();
    for t in tenants {
        t.goals.app.hash(&mut h);
        for l in &t.levels {
            l.accuracy.to_bits().hash(&mut h);
            l.latency.to_bits().hash(&mut h);
            l.memory.hash(&mut h);
        }
    }
    h.finish()
}

impl CachedState {
    /// The cache applies only to the same running set with unchanged
    /// profiles, and only if the prefix still satisfies the constraints.
    pub fn fits(&self, tenants: &[Tenant], cfg: &SchedulerConfig) -> Result<bool> {
        let total = cfg.total_quanta()?;
        let same_apps = self.apps.len() == tenants.len()
            && self
                .apps
                .iter()
                .zip(tenants)
                .all(|(a, t)| *a == t.goals.app);
        Ok(same_apps
            && self.fingerprint == fingerprint(tenants)
            && self.prefix.levels.len() == tenants.len()
            && self.prefix.quanta.len() == tenants.len()
            && self
                .prefix
                .levels
                .iter()
                .zip(tenants)
                .all(|(&m, t)| m < t.levels.len())
            && self.prefix.quanta.iter().all(|&q| q >= 1)
            && self.prefix.allocated() <= total
            && self.prefix.memory(tenants) <= cfg.memory_budget)
    }
}

/// Owns the cache across scheduling events and decides when a complete
/// greedy run is due.
#[derive(Clone, Debug)]
pub struct ScheduleAgent {
    pub cfg: SchedulerConfig,
    pub objective: Objective,
    pub caching: bool,
    pub cache: Option<CachedState>,
    pub full_runs: usize,
    pub resumed_runs: usize,
    /// Quanta handed out across all invocations.
    pub total_steps: usize,
}

impl ScheduleAgent {
    pub fn new(cfg: SchedulerConfig, objective: Objective, caching: bool) -> Self {
        Self {
            cfg,
            objective,
            caching,
            cache: None,
            full_runs: 0,
            resumed_runs: 0,
            total_steps: 0,
        }
    }

    pub fn schedule(&mut self, tenants: &[Tenant], trace: bool) -> Result<AllocationPlan> {
        let resume = match &self.cache {
            Some(c) if self.caching => {
                c.fits(tenants, &self.cfg)? && c.events_since_full + 1 < self.cfg.full_run_interval
            }
            _ => false,
        };
        let plan = if resume {
            let cache = self.cache.as_mut().expect("checked");
            cache.events_since_full += 1;
            self.resumed_runs += 1;
            resume_from_cache(cache, tenants, &self.cfg, self.objective, trace)?
        } else {
            let run = schedule(tenants, &self.cfg, self.objective, trace)?;
            self.full_runs += 1;
            self.cache = self.caching.then(|| CachedState {
                apps: tenants.iter().map(|t| t.goals.app.clone()).collect(),
                fingerprint: fingerprint(tenants),
                prefix: run.prefix,
                events_since_full: 0,
            });
            run.plan
        };
        self.total_steps += plan.steps;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{goals, point};
    use super::*;

    fn tenants(alpha: f64) -> Vec<Tenant> {
        ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, app)| Tenant {
                goals: goals(app, 0.8, 0.04, alpha),
                levels: vec![
                    point(0.6, 0.005 * (i + 1) as f64, 100),
                    point(0.75, 0.01 * (i + 1) as f64, 200),
                    point(0.85, 0.02 * (i + 1) as f64, 400),
                ],
            })
            .collect()
    }

    #[test]
    fn resumed_run_takes_remaining_quanta_only() {
        let cfg = SchedulerConfig {
            memory_budget: 100_000,
            ..SchedulerConfig::default()
        };
        let mut agent = ScheduleAgent::new(cfg.clone(), Objective::MinTotalCost, true);
        let t = tenants(0.5);
        let full = agent.schedule(&t, false).unwrap();
        assert_eq!(full.steps, 97);
        let resumed = agent.schedule(&t, false).unwrap();
        assert!(resumed.resumed);
        assert_eq!(resumed.steps, 30);
        assert_eq!(resumed.assignments, full.assignments);
    }

    #[test]
    fn empty_cache_equals_full_run() {
        let cfg = SchedulerConfig {
            memory_budget: 100_000,
            cache_fraction: 0.0,
            ..SchedulerConfig::default()
        };
        let t = tenants(0.3);
        let run = schedule(&t, &cfg, Objective::MinMaxCost, false).unwrap();
        let cache = CachedState {
            apps: t.iter().map(|x| x.goals.app.clone()).collect(),
            fingerprint: fingerprint(&t),
            prefix: run.prefix.clone(),
            events_since_full: 0,
        };
        let resumed = resume_from_cache(&cache, &t, &cfg, Objective::MinMaxCost, false).unwrap();
        assert_eq!(resumed.assignments, run.plan.assignments);
        assert_eq!(resumed.steps, run.plan.steps);
    }

    #[test]
    fn periodic_full_runs_and_invalidation() {
        let cfg = SchedulerConfig {
            memory_budget: 100_000,
            full_run_interval: 3,
            ..SchedulerConfig::default()
        };
        let mut agent = ScheduleAgent::new(cfg, Objective::MinTotalCost, true);
        let t = tenants(0.5);
        let resumed: Vec<bool> = (0..7)
            .map(|_| agent.schedule(&t, false).unwrap().resumed)
            .collect();
        assert_eq!(resumed, vec![false, true, true, false, true, true, false]);
        let fewer = &t[..2];
        assert!(!agent.schedule(fewer, false).unwrap().resumed);
    }
}
