//! Profiles every descendant of a freshly built multi-capacity model and
//! picks the knee level.

use multicap::nn::{
    train, LayerSpec, NetworkSpec, ParamStore, PatternFamily, SyntheticSpec, TrainConfig,
};
use multicap::profiling::{
    calibrate_throughput, knee_level, profile_model, LatencyModel, MemoryMode,
};
use multicap::pruning::{iterative_prune, PruneConfig};
use multicap::recovery::{build_multi_capacity, RecoveryConfig};

fn main() -> multicap::Result<()> {
    let data = SyntheticSpec {
        family: PatternFamily::Gratings,
        noise: 0.5,
        seed: 3,
        ..SyntheticSpec::default()
    }
    .generate()?;
    let net = NetworkSpec::new(
        data.shape,
        vec![
            LayerSpec::conv(3, 1, 8),
            LayerSpec::Relu,
            LayerSpec::max_pool(2),
            LayerSpec::conv(3, 8, 16),
            LayerSpec::Relu,
            LayerSpec::dense(16 * 2 * 2, data.classes),
            LayerSpec::Softmax,
        ],
        data.classes,
    )?;
    let mut params = ParamStore::init(&net, 3);
    train(
        &net,
        &mut params,
        &data.train,
        &TrainConfig {
            seed: 3,
            ..TrainConfig::default()
        },
        None,
        |_, _| Ok(false),
    )?;
    let pruned = iterative_prune(
        &net,
        &params,
        &data,
        &PruneConfig {
            accuracy_floor: 0.5,
            seed: 3,
            ..PruneConfig::default()
        },
    )?;
    let model = build_multi_capacity(
        &pruned.net,
        &pruned.params,
        &pruned.roadmap,
        &data,
        &RecoveryConfig {
            seed: 3,
            ..RecoveryConfig::default()
        },
    )?
    .model;

    let inputs: Vec<_> = data.test.iter().take(8).map(|s| s.image.clone()).collect();
    let host = calibrate_throughput(&net, &params, &inputs, 50)?;
    println!("this host runs about {host:.3e} FLOP/s on the vanilla network");

    for latency in [
        LatencyModel::FlopsThroughput {
            flops_per_second: 1.0e6,
        },
        LatencyModel::Measured { runs: 50 },
    ] {
        let profile = profile_model(
            "gratings",
            &model,
            &data.test,
            &latency,
            MemoryMode::default(),
        )?;
        println!("{latency:?}");
        for l in &profile.levels {
            println!(
                "  level {}: accuracy {:.3}  latency {:.6} s  memory {:6} B  ({} FLOPs)",
                l.level, l.accuracy, l.latency, l.memory, l.flops
            );
        }
        println!("  knee level {}", knee_level(&profile));
    }
    Ok(())
}
