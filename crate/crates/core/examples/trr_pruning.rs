//! Ranks the last conv layer's filters by triplet response residual and by
//! L1 norm, prunes half of them each way and compares after retraining.

use multicap::nn::{
    accuracy, train, LayerSpec, NetworkSpec, ParamStore, SyntheticSpec, TrainConfig,
};
use multicap::pruning::{
    l1_scores, prune_filters, rank_order, retrain_to_floor, sample_triplets, trr_scores, FilterRef,
    FilterScore,
};

fn lowest(scores: &[FilterScore], n: usize) -> Vec<FilterRef> {
    let mut s = scores.to_vec();
    s.sort_by(rank_order);
    let mut v: Vec<FilterRef> = s[..n]
        .iter()
        .map(|f| FilterRef {
            layer: f.layer,
            filter: f.filter,
        })
        .collect();
    v.sort();
    v
}

fn main() -> multicap::Result<()> {
    let data = SyntheticSpec {
        classes: 6,
        noise: 0.6,
        seed: 4,
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
    let mut params = ParamStore::init(&net, 4);
    let cfg = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    train(&net, &mut params, &data.train, &cfg, None, |_, _| Ok(false))?;
    println!(
        "vanilla accuracy {:.3}",
        accuracy(&net, &params, &data.test)?
    );

    let layer = 3;
    let triplets = sample_triplets(&data, 500, 4)?;
    let trr = trr_scores(&net, &params, &data.train, &triplets, layer)?;
    let l1 = l1_scores(&net, &params, layer)?;
    for (t, l) in trr.iter().zip(&l1) {
        println!(
            "filter {:2}: trr {:10.3}  l1 {:7.3}",
            t.filter, t.score, l.score
        );
    }

    let retrain = TrainConfig {
        epochs: 1,
        learning_rate: 0.01,
        ..cfg
    };
    for (name, scores) in [("trr", &trr), ("l1", &l1)] {
        let victims = lowest(scores, 8);
        let pruned = prune_filters(&net, &params, &victims)?;
        let before = accuracy(&pruned.net, &pruned.params, &data.test)?;
        let mut p = pruned.params;
        let after = retrain_to_floor(&pruned.net, &mut p, &data, &retrain, 1.0)?;
        println!(
            "{name}: removed {} params / {} FLOPs, accuracy {before:.3} -> {after:.3} after retraining",
            pruned.report.params_removed(),
            pruned.report.flops_removed()
        );
    }
    Ok(())
}
