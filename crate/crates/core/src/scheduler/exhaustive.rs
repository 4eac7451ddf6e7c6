use super::{
    finish, validate_tenants, Allocation, AllocationPlan, Objective, SchedulerConfig, Tenant,
};
use crate::error::{Error, Result};

/// Number of (level tuple, quanta composition) candidates.
pub fn search_space_size(tenants: &[Tenant], total: usize) -> u128 {
    let levels: u128 = tenants
        .iter()
        .map(|t| t.levels.len() as u128)
        .fold(1, u128::saturating_mul);
    levels.saturating_mul(binomial(
        total.saturating_sub(1),
        tenants.len().saturating_sub(1),
    ))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

/// Grid-optimal plan: tries every level tuple and every way of splitting the
/// whole processor into positive quanta. The first optimum in lexicographic
/// (levels, quanta) order wins.
pub fn exhaustive_schedule(
    tenants: &[Tenant],
    cfg: &SchedulerConfig,
    objective: Objective,
) -> Result<AllocationPlan> {
    let total = validate_tenants(tenants, cfg)?;
    let size = search_space_size(tenants, total);
    if size > cfg.exhaustive_limit as u128 {
        return Err(Error::InstanceTooLarge {
            size,
            limit: cfg.exhaustive_limit as u128,
        });
    }
    let n = tenants.len();
    // table[v][m][q - 1]: cost of tenant v at level m holding q quanta.
    let mut table = Vec::with_capacity(n);
    for t in tenants {
        let mut per_level = Vec::with_capacity(t.levels.len());
        for m in 0..t.levels.len() {
            per_level.push(
                (1..=total)
                    .map(|q| t.cost(m, q as f64 / total as f64))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        table.push(per_level);
    }

    let mut best: Option<(f64, Allocation)> = None;
    let mut levels = vec![0usize; n];
    loop {
        let memory: u64 = levels
            .iter()
            .zip(tenants)
            .map(|(&m, t)| t.levels[m].memory)
            .sum();
        if memory <= cfg.memory_budget {
            let mut quanta = vec![0usize; n];
            search(&table, &levels, objective, total, 0, &mut quanta, &mut best);
        }
        // Odometer over level tuples, last tenant fastest.
        let mut v = n;
        loop {
            if v == 0 {
                let (_, alloc) = best.expect("smallest levels fit the budget");
                return finish(tenants, cfg, objective, &alloc, 0, false, None);
            }
            v -= 1;
            levels[v] += 1;
            if levels[v] < tenants[v].levels.len() {
                break;
            }
            levels[v] = 0;
        }
    }
}

fn search(
    table: &[Vec<Vec<f64>>],
    levels: &[usize],
    objective: Objective,
    remaining: usize,
    v: usize,
    quanta: &mut Vec<usize>,
    best: &mut Option<(f64, Allocation)>,
) {
    let n = levels.len();
    if v == n - 1 {
        quanta[v] = remaining;
        let value = objective.combine((0..n).map(|i| table[i][levels[i]][quanta[i] - 1]));
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            *best = Some((
                value,
                Allocation {
                    levels: levels.to_vec(),
                    quanta: quanta.clone(),
                },
            ));
        }
        return;
    }
    let others = n - 1 - v;
    for q in 1..=remaining - others {
        quanta[v] = q;
        search(table, levels, objective, remaining - q, v + 1, quanta, best);
    }
}

#[cfg(test)]
mod tests {
    use super::super::schedule;
    use super::super::tests::{goals, point};
    use super::*;

    #[test]
    fn counts_candidates() {
        let t = Tenant {
            goals: goals("a", 0.5, 1.0, 0.5),
            levels: vec![point(0.5, 0.1, 1); 3],
        };
        assert_eq!(search_space_size(&[t.clone(), t.clone()], 10), 9 * 9);
        assert_eq!(search_space_size(&[t.clone(), t.clone(), t], 10), 27 * 36);
        assert_eq!(binomial(5, 0), 1);
    }

    #[test]
    fn single_app_matches_greedy() {
        let t = [Tenant {
            goals: goals("a", 0.8, 0.05, 0.7),
            levels: vec![
                point(0.6, 0.01, 100),
                point(0.75, 0.03, 200),
                point(0.9, 0.2, 300),
            ],
        }];
        let cfg = SchedulerConfig {
            quantum: 0.1,
            ..SchedulerConfig::default()
        };
        for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
            let ex = exhaustive_schedule(&t, &cfg, objective).unwrap();
            let gr = schedule(&t, &cfg, objective, false).unwrap().plan;
            assert_eq!(ex.assignments, gr.assignments);
        }
    }

    #[test]
    fn hand_built_two_app_instance() {
        // Splits (1,3), (2,2), (3,1) cost at best 0.15, 0.02 + 0.05, 0.15.
        let fast = Tenant {
            goals: goals("fast", 0.7, 0.1, 1.0),
            levels: vec![point(0.6, 0.02, 10), point(0.7, 0.06, 20)],
        };
        let slow = Tenant {
            goals: goals("slow", 0.7, 0.1, 1.0),
            levels: vec![point(0.65, 0.05, 10), point(0.8, 0.2, 20)],
        };
        let cfg = SchedulerConfig {
            quantum: 0.25,
            memory_budget: 40,
            ..SchedulerConfig::default()
        };
        let tenants = [fast, slow];
        let ex = exhaustive_schedule(&tenants, &cfg, Objective::MinTotalCost).unwrap();
        let gr = schedule(&tenants, &cfg, Objective::MinTotalCost, false)
            .unwrap()
            .plan;
        assert_eq!(
            ex.assignments
                .iter()
                .map(|a| (a.level, a.quanta))
                .collect::<Vec<_>>(),
            vec![(2, 2), (1, 2)]
        );
        assert!((ex.objective - 0.07).abs() < 1e-12);
        assert_eq!(ex.assignments, gr.assignments);
    }

    #[test]
    fn refuses_large_instances() {
        let t = Tenant {
            goals: goals("a", 0.5, 1.0, 0.5),
            levels: vec![point(0.5, 0.1, 1); 5],
        };
        let cfg = SchedulerConfig {
            exhaustive_limit: 1000,
            ..SchedulerConfig::default()
        };
        assert!(matches!(
            exhaustive_schedule(&[t.clone(), t.clone(), t], &cfg, Objective::MinMaxCost),
            Err(Error::InstanceTooLarge { .. })
        ));
    }
}
