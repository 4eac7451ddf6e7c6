use multicap::scheduler::{
    exhaustive_schedule, schedule, AppGoals, LevelPoint, Objective, SchedulerConfig, Tenant,
};
use proptest::prelude::*;

fn tenant_strategy(i: usize) -> impl Strategy<Value = Tenant> {
    (
        prop::collection::vec((0.3f64..0.95, 0.002f64..0.08, 10u64..400), 1..=3),
        0.5f64..0.9,
        0.0f64..=1.0,
    )
        .prop_map(move |(mut rows, min_accuracy, alpha)| {
            // Larger levels are more accurate, slower and bigger.
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut latency = 0.0;
            let mut memory = 0;
            let levels = rows
                .into_iter()
                .map(|(accuracy, dl, dm)| {
                    latency += dl;
                    memory += dm;
                    LevelPoint {
                        accuracy,
                        latency,
                        memory,
                    }
                })
                .collect();
            Tenant {
                goals: AppGoals {
                    app: format!("app{i}"),
                    min_accuracy,
                    max_latency: 1.0 / 30.0,
                    alpha,
                },
                levels,
            }
        })
}

fn instance() -> impl Strategy<Value = (Vec<Tenant>, u64)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            (0..n).map(tenant_strategy).collect::<Vec<_>>(),
            400u64..2000,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_plans_are_feasible_and_never_beat_the_grid((tenants, budget) in instance()) {
        let cfg = SchedulerConfig {
            quantum: 0.1,
            memory_budget: budget,
            ..SchedulerConfig::default()
        };
        for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
            let greedy = match schedule(&tenants, &cfg, objective, false) {
                Ok(run) => run.plan,
                Err(multicap::Error::ResourceInfeasible { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let best = exhaustive_schedule(&tenants, &cfg, objective).unwrap();
            prop_assert!(greedy.objective >= best.objective - 1e-12);
            prop_assert!(greedy.total_share <= 1.0 + 1e-9);
            prop_assert!(greedy.total_memory <= budget);
            prop_assert_eq!(greedy.assignments.iter().map(|a| a.quanta).sum::<usize>(), 10);
            prop_assert!(greedy.assignments.iter().all(|a| a.quanta >= 1));
        }
    }
}
