mod common;

use common::{analytic_cost, expected_after, random_net, random_victims};
use multicap::nn::{count_params, network_flops, LayerSpec, NetworkSpec, ParamStore};
use multicap::pruning::{prune_filters, FilterRef};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_case(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = random_net(&mut rng, 3);
    let params = ParamStore::init(&net, seed);
    let (victims, removed) = random_victims(&mut rng, &net);
    let pruned = prune_filters(&net, &params, &victims).unwrap();
    let expected = expected_after(&net, &removed);
    assert_eq!(pruned.net, expected);

    let (p0, f0) = analytic_cost(&net);
    let (p1, f1) = analytic_cost(&expected);
    let r = &pruned.report;
    assert_eq!((r.params_before, r.params_after), (p0, p1));
    assert_eq!((r.flops_before, r.flops_after), (f0, f1));
    assert_eq!(r.params_removed(), p0 - p1);
    assert_eq!(
        r.layers.iter().map(|l| l.params_removed).sum::<u64>(),
        p0 - p1
    );
    assert_eq!(
        r.layers.iter().map(|l| l.flops_removed).sum::<u64>(),
        f0 - f1
    );
    assert_eq!(count_params(&pruned.net, &pruned.params).unwrap().count, p1);
    assert_eq!(network_flops(&pruned.net).unwrap(), f1);
}

#[test]
fn two_hundred_random_prunes() {
    for seed in 0..200 {
        check_case(seed);
    }
}

/// One filter out of a `k = 3` conv over 2 channels on an 8x8 map,
/// followed by a 6-filter conv: 19 local and 54 downstream parameters.
#[test]
fn single_filter_matches_closed_form() {
    let net = NetworkSpec::new(
        multicap::nn::TensorShape::new(10, 10, 2),
        vec![
            LayerSpec::conv(3, 2, 4),
            LayerSpec::Relu,
            LayerSpec::conv(3, 4, 6),
            LayerSpec::dense(6 * 6 * 6, 2),
            LayerSpec::Softmax,
        ],
        2,
    )
    .unwrap();
    let params = ParamStore::init(&net, 0);
    let r = prune_filters(
        &net,
        &params,
        &[FilterRef {
            layer: 0,
            filter: 1,
        }],
    )
    .unwrap()
    .report;
    assert_eq!(r.params_removed(), 19 + 54);
    assert_eq!(r.flops_removed(), 9 * 2 * 64 + 9 * 6 * 36);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pruning_conserves_accounting(seed in any::<u64>()) {
        check_case(seed);
    }
}
