//! Sweeps the latency weight over a small catalog and prints the resulting
//! accuracy/frame-rate frontier next to the baseline.

use multicap::profiling::{
    knee_level, LatencyModel, LevelProfile, MemoryMode, ModelProfile, Units, PROFILE_SCHEMA_VERSION,
};
use multicap::scheduler::Objective;
use multicap::simulator::{generate_traces, sweep_alpha, BenchmarkConfig, CatalogApp};

fn app(id: &str, min_accuracy: f64, scale: f64) -> CatalogApp {
    let rows = [
        (0.60, 0.004, 4_000),
        (0.72, 0.008, 9_000),
        (0.80, 0.014, 16_000),
        (0.84, 0.022, 25_000),
    ];
    let profile = ModelProfile {
        schema_version: PROFILE_SCHEMA_VERSION,
        app: id.into(),
        units: Units::default(),
        latency_model: LatencyModel::default(),
        memory_mode: MemoryMode::default(),
        levels: rows
            .iter()
            .enumerate()
            .map(|(i, &(accuracy, latency, bytes))| LevelProfile {
                level: i + 1,
                accuracy,
                latency: latency * scale,
                memory: bytes,
                param_bytes: bytes,
                flops: (latency * scale * 1e8) as u64,
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

fn main() -> multicap::Result<()> {
    let cfg = BenchmarkConfig {
        catalog: vec![
            app("a", 0.80, 0.5),
            app("b", 0.75, 1.0),
            app("c", 0.70, 1.5),
            app("d", 0.82, 2.0),
        ],
        max_concurrency: 4,
        repetitions: 20,
        seed: 5,
        ..BenchmarkConfig::default()
    };
    let traces = generate_traces(&cfg.app_ids(), &cfg)?;
    let alphas = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];
    for objective in [Objective::MinTotalCost, Objective::MinMaxCost] {
        let sweep = sweep_alpha(&traces, &cfg, &alphas, objective, true)?;
        println!(
            "{objective:?} (baseline accuracy {:.4}, {:.2} fps)",
            sweep.baseline_accuracy, sweep.baseline_frame_rate
        );
        println!("  alpha   accuracy   fps     gain(pp)  speedup  dominates");
        for (i, p) in sweep.points.iter().enumerate() {
            let knee = if i == sweep.knee { " <- knee" } else { "" };
            println!(
                "  {:<6}  {:.4}    {:6.2}  {:+7.2}   {:5.2}x   {}{knee}",
                p.alpha, p.accuracy, p.frame_rate, p.accuracy_gain, p.speedup, p.dominates_baseline
            );
        }
        println!(
            "  kendall tau: accuracy {:.2}, frame rate {:.2}, monotone {}",
            sweep.trend.accuracy_tau, sweep.trend.frame_rate_tau, sweep.trend.monotone
        );
    }
    Ok(())
}
