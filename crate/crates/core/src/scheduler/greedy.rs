use super::agent::CachedState;
use super::{
    finish, validate_tenants, Allocation, AllocationPlan, Objective, SchedulerConfig, Tenant,
    TraceStep,
};
use crate::error::Result;

/// A full greedy run plus the allocation it passed through when the cache
/// fraction of the processor had been handed out.
#[derive(Clone, Debug, PartialEq)]
pub struct GreedyRun {
    pub plan: AllocationPlan,
    pub prefix: Allocation,
}

pub fn schedule_min_total(tenants: &[Tenant], cfg: &SchedulerConfig) -> Result<AllocationPlan> {
    Ok(schedule(tenants, cfg, Objective::MinTotalCost, false)?.plan)
}

pub fn schedule_min_max(tenants: &[Tenant], cfg: &SchedulerConfig) -> Result<AllocationPlan> {
    Ok(schedule(tenants, cfg, Objective::MinMaxCost, false)?.plan)
}

/// Greedy allocation from scratch. Every tenant starts with one quantum at
/// its cheapest memory-feasible level; the remaining quanta are handed out
/// one at a time:
///
/// * min-total: to the (tenant, level) pair with the smallest cost increase;
/// * min-max: to the tenant with the highest cost, which then moves to its
///   cheapest level at the new share.
///
/// Ties go to the lower tenant index, then the lower level. A final pass
/// moves every tenant to its cheapest feasible level at its final share.
pub fn schedule(
    tenants: &[Tenant],
    cfg: &SchedulerConfig,
    objective: Objective,
    trace: bool,
) -> Result<GreedyRun> {
    let total = validate_tenants(tenants, cfg)?;
    let mut g = Greedy::new(tenants, cfg, objective, total, trace);
    g.alloc = Allocation {
        levels: vec![0; tenants.len()],
        quanta: vec![1; tenants.len()],
    };
    for v in 0..tenants.len() {
        g.alloc.levels[v] = g.best_level(v, 1)?.0;
    }
    let target = cfg.cache_quanta()?;
    let mut prefix = None;
    while g.alloc.allocated() < total {
        if prefix.is_none() && g.alloc.allocated() >= target {
            prefix = Some(g.alloc.clone());
        }
        g.step()?;
    }
    let prefix = prefix.unwrap_or_else(|| g.alloc.clone());
    let plan = g.finish(false)?;
    Ok(GreedyRun { plan, prefix })
}

/// Continues a cached partial allocation until the processor is used up.
/// Falls back to a full run when the cache does not fit the current tenants.
pub fn resume_from_cache(
    cached: &CachedState,
    tenants: &[Tenant],
    cfg: &SchedulerConfig,
    objective: Objective,
    trace: bool,
) -> Result<AllocationPlan> {
    let total = validate_tenants(tenants, cfg)?;
    if !cached.fits(tenants, cfg)? {
        return Ok(schedule(tenants, cfg, objective, trace)?.plan);
    }
    let mut g = Greedy::new(tenants, cfg, objective, total, trace);
    g.alloc = cached.prefix.clone();
    while g.alloc.allocated() < total {
        g.step()?;
    }
    g.finish(true)
}

struct Greedy<'a> {
    tenants: &'a [Tenant],
    cfg: &'a SchedulerConfig,
    objective: Objective,
    total: usize,
    alloc: Allocation,
    steps: usize,
    trace: Option<Vec<TraceStep>>,
}

impl<'a> Greedy<'a> {
    fn new(
        tenants: &'a [Tenant],
        cfg: &'a SchedulerConfig,
        objective: Objective,
        total: usize,
        trace: bool,
    ) -> Self {
        Self {
            tenants,
            cfg,
            objective,
            total,
            alloc: Allocation::default(),
            steps: 0,
            trace: trace.then(Vec::new),
        }
    }

    fn share(&self, quanta: usize) -> f64 {
        quanta as f64 / self.total as f64
    }

    /// Memory in use if tenant `v` switched to `level`.
    fn memory_with(&self, v: usize, level: usize) -> u64 {
        let t = &self.tenants[v];
        self.alloc.memory(self.tenants) - t.levels[self.alloc.levels[v]].memory
            + t.levels[level].memory
    }

    /// Cheapest level for tenant `v` at `quanta` that keeps memory within budget.
    fn best_level(&self, v: usize, quanta: usize) -> Result<(usize, f64)> {
        let t = &self.tenants[v];
        let mut best: Option<(usize, f64)> = None;
        for m in 0..t.levels.len() {
            if self.memory_with(v, m) > self.cfg.memory_budget {
                continue;
            }
            let c = t.cost(m, self.share(quanta))?;
            if best.is_none_or(|(_, b)| c < b) {
                best = Some((m, c));
            }
        }
        // The current level is always feasible.
        Ok(best.expect("current level fits the budget"))
    }

    fn step(&mut self) -> Result<()> {
        let costs = self.alloc.costs(self.tenants, self.total)?;
        let (v, m) = match self.objective {
            Objective::MinTotalCost => {
                let mut best: Option<(f64, usize, usize)> = None;
                for (v, t) in self.tenants.iter().enumerate() {
                    let q = self.alloc.quanta[v] + 1;
                    for m in 0..t.levels.len() {
                        if self.memory_with(v, m) > self.cfg.memory_budget {
                            continue;
                        }
                        let delta = t.cost(m, self.share(q))? - costs[v];
                        if best.is_none_or(|(b, _, _)| delta < b) {
                            best = Some((delta, v, m));
                        }
                    }
                }
                let (_, v, m) = best.expect("current levels fit the budget");
                (v, m)
            }
            Objective::MinMaxCost => {
                let mut v = 0;
                for (i, &c) in costs.iter().enumerate() {
                    if c > costs[v] {
                        v = i;
                    }
                }
                (v, self.best_level(v, self.alloc.quanta[v] + 1)?.0)
            }
        };
        self.alloc.quanta[v] += 1;
        self.alloc.levels[v] = m;
        self.steps += 1;
        if let Some(trace) = self.trace.as_mut() {
            let objective = self
                .objective
                .combine(self.alloc.costs(self.tenants, self.total)?);
            let step = TraceStep {
                app: v,
                level: m + 1,
                quanta: self.alloc.quanta[v],
                objective,
            };
            trace.push(step);
        }
        Ok(())
    }

    fn finish(mut self, resumed: bool) -> Result<AllocationPlan> {
        for v in 0..self.tenants.len() {
            self.alloc.levels[v] = self.best_level(v, self.alloc.quanta[v])?.0;
        }
        finish(
            self.tenants,
            self.cfg,
            self.objective,
            &self.alloc,
            self.steps,
            resumed,
            self.trace,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{goals, point};
    use super::*;
    use crate::error::Error;

    fn cfg(quantum: f64, budget: u64) -> SchedulerConfig {
        SchedulerConfig {
            quantum,
            memory_budget: budget,
            ..SchedulerConfig::default()
        }
    }

    fn tenant(app: &str, alpha: f64) -> Tenant {
        Tenant {
            goals: goals(app, 0.8, 0.05, alpha),
            levels: vec![
                point(0.6, 0.01, 100),
                point(0.75, 0.02, 200),
                point(0.85, 0.04, 400),
            ],
        }
    }

    #[test]
    fn single_app_takes_everything() {
        let t = [tenant("a", 0.5)];
        for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
            let plan = schedule(&t, &cfg(0.01, 1000), objective, false)
                .unwrap()
                .plan;
            assert_eq!(plan.assignments[0].quanta, 100);
            assert_eq!(plan.assignments[0].level, 3);
            assert_eq!(plan.steps, 99);
        }
        let plan = schedule_min_total(&t, &cfg(0.01, 250)).unwrap();
        assert_eq!(plan.assignments[0].level, 2);
    }

    #[test]
    fn identical_apps_split_evenly_under_min_max() {
        let t = [tenant("a", 1.0), tenant("b", 1.0)];
        let plan = schedule_min_max(&t, &cfg(0.01, 10_000)).unwrap();
        let (a, b) = (&plan.assignments[0], &plan.assignments[1]);
        assert!(a.quanta.abs_diff(b.quanta) <= 1);
        assert_eq!(a.level, b.level);
    }

    #[test]
    fn tight_memory_forces_smaller_levels() {
        let t = [tenant("a", 0.2), tenant("b", 0.2)];
        let loose = schedule_min_total(&t, &cfg(0.05, 10_000)).unwrap();
        assert!(loose.assignments.iter().all(|a| a.level == 3));
        let tight = schedule_min_total(&t, &cfg(0.05, 600)).unwrap();
        assert!(tight.total_memory <= 600);
        assert!(tight.assignments.iter().any(|a| a.level < 3));
        assert!(matches!(
            schedule_min_total(&t, &cfg(0.05, 150)),
            Err(Error::ResourceInfeasible {
                required: 200,
                budget: 150,
                ..
            })
        ));
    }

    #[test]
    fn trace_records_every_step() {
        let t = [tenant("a", 0.5), tenant("b", 0.1)];
        let run = schedule(&t, &cfg(0.1, 10_000), Objective::MinTotalCost, true).unwrap();
        let trace = run.plan.trace.unwrap();
        assert_eq!(trace.len(), 8);
        assert_eq!(run.prefix.allocated(), 7);
    }
}
