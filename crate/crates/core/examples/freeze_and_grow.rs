//! Prunes a trained network into a roadmap, regrows it level by level with
//! earlier levels frozen, and inspects the resulting multi-capacity model.

use multicap::nn::{
    train, LayerSpec, NetworkSpec, ParamStore, PatternFamily, SyntheticSpec, TrainConfig,
};
use multicap::pruning::{iterative_prune, PruneConfig};
use multicap::recovery::{build_multi_capacity, MultiCapacityModel, RecoveryConfig};

fn main() -> multicap::Result<()> {
    let data = SyntheticSpec {
        family: PatternFamily::Rings,
        noise: 0.4,
        seed: 2,
        ..SyntheticSpec::default()
    }
    .generate()?;
    let net = NetworkSpec::new(
        data.shape,
        vec![
            LayerSpec::conv(3, 1, 8),
            LayerSpec::Relu,
            LayerSpec::max_pool(2),
            LayerSpec::conv(3, 8, 12),
            LayerSpec::Relu,
            LayerSpec::dense(12 * 2 * 2, data.classes),
            LayerSpec::Softmax,
        ],
        data.classes,
    )?;
    let mut params = ParamStore::init(&net, 2);
    let train_cfg = TrainConfig {
        seed: 2,
        ..TrainConfig::default()
    };
    train(&net, &mut params, &data.train, &train_cfg, None, |_, _| {
        Ok(false)
    })?;

    let prune_cfg = PruneConfig {
        accuracy_floor: 0.5,
        prune_fraction: 0.25,
        seed: 2,
        ..PruneConfig::default()
    };
    let pruned = iterative_prune(&net, &params, &data, &prune_cfg)?;
    let roadmap = &pruned.roadmap;
    println!(
        "vanilla: {:?} filters, accuracy {:.3}",
        roadmap.vanilla_filter_counts, roadmap.vanilla_accuracy
    );
    for r in &roadmap.records {
        println!(
            "footprint {}: -{} filters -> {:?}, accuracy {:.3}",
            r.iteration,
            r.victims.len(),
            r.filter_counts,
            r.accuracy
        );
    }

    let rec_cfg = RecoveryConfig {
        seed: 2,
        ..RecoveryConfig::default()
    };
    let built = build_multi_capacity(&pruned.net, &pruned.params, roadmap, &data, &rec_cfg)?;
    for (g, r) in built.grows.iter().zip(&built.retrains) {
        println!(
            "level {}: +{} filters, +{} params, accuracy {:.3} -> {:.3}",
            g.level, g.new_filters, g.new_params, r.accuracy_before, r.accuracy_after
        );
    }

    let model = built.model;
    let sizes = model.level_sizes()?;
    println!("level sizes (bytes): {sizes:?}");
    println!(
        "one store: {} B, separate descendants: {} B",
        sizes.last().unwrap(),
        sizes.iter().sum::<u64>()
    );
    let top = model.levels;
    let up = model.switch_delta(1, top)?;
    let down = model.switch_delta(top, 1)?;
    println!(
        "switch 1 -> {top}: page in {} B, page out {} B",
        up.page_in, up.page_out
    );
    println!(
        "switch {top} -> 1: page in {} B, page out {} B",
        down.page_in, down.page_out
    );

    let path = std::env::temp_dir().join("multicap-model.bin");
    model.save(&path)?;
    let back = MultiCapacityModel::load(&path)?;
    println!("round trip through {}: {}", path.display(), back == model);
    Ok(())
}
