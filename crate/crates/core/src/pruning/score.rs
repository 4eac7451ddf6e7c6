//! Filter importance scores.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::triplet::Triplet;
use crate::error::{Error, Result};
use crate::nn::{forward, Activations, LayerSpec, NetworkSpec, ParamStore, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterScore {
    pub layer: usize,
    pub filter: usize,
    pub score: f64,
}

/// Ascending by score; ties broken by lower layer, then lower filter index.
pub fn rank_order(a: &FilterScore, b: &FilterScore) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.layer.cmp(&b.layer))
        .then(a.filter.cmp(&b.filter))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    /// Triplet response residual.
    #[default]
    Trr,
    /// Sum of absolute kernel weights.
    L1,
}

fn require_conv(net: &NetworkSpec, layer: usize, operation: &'static str) -> Result<usize> {
    match net.layers.get(layer) {
        Some(LayerSpec::Conv { out_channels, .. }) => Ok(*out_channels),
        Some(other) => Err(Error::UnsupportedLayer {
            layer,
            kind: other.kind(),
            operation,
        }),
        None => Err(Error::InvalidArgument(format!("no layer {layer}"))),
    }
}

/// Triplet response residual of every filter in conv layer `layer`:
/// the sum over triplets of `|F(anc) - F(neg)|^2 - |F(anc) - F(pos)|^2`,
/// where `F` is the filter's (pre-activation) output map.
pub fn trr_scores(
    net: &NetworkSpec,
    params: &ParamStore,
    samples: &[Sample],
    triplets: &[Triplet],
    layer: usize,
) -> Result<Vec<FilterScore>> {
    require_conv(net, layer, "trr_scores")?;
    let cache = ActivationCache::build(net, params, samples, triplets)?;
    Ok(cache.scores(triplets, layer))
}

/// TRR scores of every filter in every conv layer, sharing one forward pass
/// per distinct image.
pub fn trr_scores_all(
    net: &NetworkSpec,
    params: &ParamStore,
    samples: &[Sample],
    triplets: &[Triplet],
) -> Result<Vec<FilterScore>> {
    let cache = ActivationCache::build(net, params, samples, triplets)?;
    Ok(net
        .conv_layers()
        .into_iter()
        .flat_map(|j| cache.scores(triplets, j))
        .collect())
}

struct ActivationCache {
    acts: Vec<Option<Activations>>,
}

impl ActivationCache {
    fn build(
        net: &NetworkSpec,
        params: &ParamStore,
        samples: &[Sample],
        triplets: &[Triplet],
    ) -> Result<Self> {
        let mut acts: Vec<Option<Activations>> = vec![None; samples.len()];
        for t in triplets {
            for i in [t.anchor, t.positive, t.negative] {
                let sample = samples.get(i).ok_or_else(|| {
                    Error::InvalidArgument(format!("triplet index {i} out of range"))
                })?;
                if acts[i].is_none() {
                    acts[i] = Some(forward(net, params, &sample.image)?);
                }
            }
        }
        Ok(Self { acts })
    }

    fn map(&self, image: usize, layer: usize, filter: usize) -> &[f64] {
        self.acts[image].as_ref().expect("cached").outputs[layer].channel(filter)
    }

    fn scores(&self, triplets: &[Triplet], layer: usize) -> Vec<FilterScore> {
        let Some(first) = triplets.first() else {
            return Vec::new();
        };
        let filters = self.acts[first.anchor].as_ref().expect("cached").outputs[layer]
            .shape
            .channels;
        (0..filters)
            .map(|filter| {
                let mut score = 0.0;
                for t in triplets {
                    let a = self.map(t.anchor, layer, filter);
                    let p = self.map(t.positive, layer, filter);
                    let n = self.map(t.negative, layer, filter);
                    score += squared_distance(a, n) - squared_distance(a, p);
                }
                FilterScore {
                    layer,
                    filter,
                    score,
                }
            })
            .collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// L1 norm of each filter's kernel weights (bias excluded).
pub fn l1_scores(net: &NetworkSpec, params: &ParamStore, layer: usize) -> Result<Vec<FilterScore>> {
    let filters = require_conv(net, layer, "l1_scores")?;
    let weights = &params.layers[layer].weights;
    let per_filter = weights.len() / filters;
    Ok(weights
        .chunks(per_filter)
        .enumerate()
        .map(|(filter, w)| FilterScore {
            layer,
            filter,
            score: w.iter().map(|v| v.abs()).sum(),
        })
        .collect())
}

pub fn l1_scores_all(net: &NetworkSpec, params: &ParamStore) -> Result<Vec<FilterScore>> {
    let mut out = Vec::new();
    for j in net.conv_layers() {
        out.extend(l1_scores(net, params, j)?);
    }
    Ok(out)
}
