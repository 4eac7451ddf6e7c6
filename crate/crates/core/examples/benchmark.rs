//! Generates random launch/stop traces over a four-app catalog and replays
//! them with the resource-aware scheduler and the fixed-knee baseline.

use multicap::profiling::{
    knee_level, LatencyModel, LevelProfile, MemoryMode, ModelProfile, Units, PROFILE_SCHEMA_VERSION,
};
use multicap::scheduler::Objective;
use multicap::simulator::{
    compare, generate_traces, simulate_many, BenchmarkConfig, CatalogApp, Scheme,
};

/// `(accuracy, latency, parameter bytes)` per level; memory adds a fixed
/// activation footprint.
fn app(id: &str, min_accuracy: f64, levels: &[(f64, f64, u64)]) -> CatalogApp {
    let profile = ModelProfile {
        schema_version: PROFILE_SCHEMA_VERSION,
        app: id.into(),
        units: Units::default(),
        latency_model: LatencyModel::default(),
        memory_mode: MemoryMode::default(),
        levels: levels
            .iter()
            .enumerate()
            .map(|(i, &(accuracy, latency, bytes))| LevelProfile {
                level: i + 1,
                accuracy,
                latency,
                memory: bytes + 4096,
                param_bytes: bytes,
                flops: (latency * 1e8) as u64,
            })
            .collect(),
        manifest: None,
    };
    CatalogApp {
        id: id.into(),
        min_accuracy,
        max_latency: 1.0 / 30.0,
        alpha: 0.1,
        knee_level: knee_level(&profile),
        profile,
    }
}

fn catalog() -> Vec<CatalogApp> {
    vec![
        app(
            "bars",
            0.95,
            &[
                (0.90, 0.002, 2_000),
                (0.95, 0.003, 3_500),
                (0.97, 0.004, 5_000),
            ],
        ),
        app(
            "blobs",
            0.80,
            &[
                (0.62, 0.010, 20_000),
                (0.74, 0.016, 35_000),
                (0.80, 0.024, 55_000),
                (0.83, 0.034, 80_000),
            ],
        ),
        app(
            "gratings",
            0.87,
            &[
                (0.75, 0.010, 20_000),
                (0.84, 0.017, 36_000),
                (0.88, 0.025, 56_000),
                (0.90, 0.035, 82_000),
            ],
        ),
        app(
            "rings",
            0.72,
            &[
                (0.60, 0.002, 2_000),
                (0.70, 0.003, 3_400),
                (0.74, 0.004, 5_200),
            ],
        ),
    ]
}

fn main() -> multicap::Result<()> {
    let cfg = BenchmarkConfig {
        catalog: catalog(),
        max_concurrency: 4,
        repetitions: 20,
        seed: 9,
        ..BenchmarkConfig::default()
    };
    let traces = generate_traces(&cfg.app_ids(), &cfg)?;
    let first = &traces[0];
    println!(
        "trace 0: {} events over {} s",
        first.events.len(),
        first.duration
    );
    for e in first.events.iter().take(6) {
        println!("  t={:2} {:?} {}", e.t, e.kind, e.app);
    }

    let baseline = simulate_many(&traces, &cfg, Scheme::Baseline, false)?;
    println!(
        "baseline: accuracy {:.4}, {:.2} fps, paged {} B",
        baseline.accuracy,
        baseline.frame_rate,
        baseline.paged_bytes()
    );
    for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
        let scheme = Scheme::ResourceAware {
            objective,
            caching: true,
            alpha: None,
        };
        let m = simulate_many(&traces, &cfg, scheme, false)?;
        let c = compare(&m, &baseline);
        println!(
            "{objective:?}: accuracy {:.4}, {:.2} fps ({:+.2} pp, {:.2}x), paged {} B nested vs {} B independent",
            m.accuracy,
            m.frame_rate,
            c.accuracy_gain,
            c.speedup,
            m.paged_bytes(),
            m.independent_paged_bytes()
        );
        for a in &m.apps {
            println!(
                "  {:9} {:4} s running, accuracy {:.4}, {:.2} fps",
                a.app, a.running_seconds, a.accuracy, a.frame_rate
            );
        }
    }
    Ok(())
}
