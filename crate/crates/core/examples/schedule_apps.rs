//! Plans compute shares and levels for three apps with both objectives,
//! checks the greedy plans against the exhaustive optimum, and shows the
//! cached agent resuming from a partial allocation.

use multicap::scheduler::{
    exhaustive_schedule, schedule, AppGoals, LevelPoint, Objective, ScheduleAgent, SchedulerConfig,
    Tenant,
};

fn tenant(app: &str, speed: f64, alpha: f64) -> Tenant {
    let levels = [
        (0.62, 0.004, 40_000),
        (0.74, 0.009, 90_000),
        (0.81, 0.016, 170_000),
        (0.84, 0.025, 260_000),
    ];
    Tenant {
        goals: AppGoals {
            app: app.into(),
            min_accuracy: 0.8,
            max_latency: 1.0 / 30.0,
            alpha,
        },
        levels: levels
            .iter()
            .map(|&(accuracy, latency, memory)| LevelPoint {
                accuracy,
                latency: latency * speed,
                memory,
            })
            .collect(),
    }
}

fn main() -> multicap::Result<()> {
    let tenants = vec![
        tenant("camera", 1.0, 0.5),
        tenant("doorbell", 1.5, 0.5),
        tenant("dashcam", 2.5, 0.5),
    ];
    let cfg = SchedulerConfig {
        quantum: 0.05,
        memory_budget: 500_000,
        ..SchedulerConfig::default()
    };
    for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
        let greedy = schedule(&tenants, &cfg, objective, false)?.plan;
        let best = exhaustive_schedule(&tenants, &cfg, objective)?;
        println!(
            "{objective:?}: greedy {:.5}, optimum {:.5}",
            greedy.objective, best.objective
        );
        for a in &greedy.assignments {
            println!(
                "  {:9} level {} share {:.2} cost {:+.4}",
                a.app, a.level, a.share, a.cost
            );
        }
        println!(
            "  memory {} of {} B",
            greedy.total_memory, cfg.memory_budget
        );
    }

    let mut agent = ScheduleAgent::new(cfg.clone(), Objective::MinTotalCost, true);
    for event in 0..12 {
        let plan = agent.schedule(&tenants, false)?;
        println!(
            "event {event:2}: {} steps, resumed {}, objective {:.5}",
            plan.steps, plan.resumed, plan.objective
        );
    }
    println!(
        "full runs {}, resumed runs {}",
        agent.full_runs, agent.resumed_runs
    );
    Ok(())
}
