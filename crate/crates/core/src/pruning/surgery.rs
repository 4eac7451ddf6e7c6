//! Structural removal of conv filters.
//!
//! Removing filter `i` of conv layer `j` deletes its `k x k x m_{j-1}`
//! kernel and bias, the output map it produced, and every weight of the
//! consuming layer that read that map: one `k x k` kernel slice per filter
//! of the next conv layer, or `w x h` input columns of a dense layer.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{count_flops, LayerParams, LayerSpec, NetworkSpec, ParamStore, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FilterRef {
    pub layer: usize,
    pub filter: usize,
}

/// For every layer, the conv layer whose filters define the channels of that
/// layer's input (`None` for the network input or after a dense layer).
pub fn channel_sources(net: &NetworkSpec) -> Vec<Option<usize>> {
    let mut current = None;
    net.layers
        .iter()
        .enumerate()
        .map(|(j, layer)| {
            let src = current;
            match layer {
                LayerSpec::Conv { .. } => current = Some(j),
                LayerSpec::Dense { .. } => current = None,
                _ => {}
            }
            src
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerReduction {
    pub layer: usize,
    pub filters_removed: usize,
    pub params_removed: u64,
    pub flops_removed: u64,
}

/// Parameter and FLOP savings of a pruning step, evaluated from the
/// per-layer formulas on the filter counts before and after.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub params_before: u64,
    pub params_after: u64,
    pub flops_before: u64,
    pub flops_after: u64,
    pub layers: Vec<LayerReduction>,
}

impl ReductionReport {
    pub fn params_removed(&self) -> u64 {
        self.params_before - self.params_after
    }

    pub fn flops_removed(&self) -> u64 {
        self.flops_before - self.flops_after
    }
}

#[derive(Clone, Debug)]
pub struct Pruned {
    pub net: NetworkSpec,
    pub params: ParamStore,
    pub report: ReductionReport,
}

/// Surviving filter indices (ascending) of every conv layer after removing
/// `victims`; non-conv layers map to an empty list.
pub fn surviving_filters(net: &NetworkSpec, victims: &[FilterRef]) -> Result<Vec<Vec<usize>>> {
    let mut removed: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); net.layers.len()];
    for v in victims {
        let Some(count) = net.filter_count(v.layer) else {
            return Err(Error::InvalidArgument(format!(
                "layer {} is not a conv layer",
                v.layer
            )));
        };
        if v.filter >= count {
            return Err(Error::InvalidArgument(format!(
                "filter {} out of range for layer {} with {count} filters",
                v.filter, v.layer
            )));
        }
        if !removed[v.layer].insert(v.filter) {
            return Err(Error::InvalidArgument(format!(
                "filter {} of layer {} listed twice",
                v.filter, v.layer
            )));
        }
    }
    net.layers
        .iter()
        .enumerate()
        .map(|(j, layer)| match layer {
            LayerSpec::Conv { out_channels, .. } => {
                let keep: Vec<usize> = (0..*out_channels)
                    .filter(|i| !removed[j].contains(i))
                    .collect();
                if keep.is_empty() {
                    Err(Error::InvalidArgument(format!(
                        "pruning would remove all {out_channels} filters of layer {j}"
                    )))
                } else {
                    Ok(keep)
                }
            }
            _ => Ok(Vec::new()),
        })
        .collect()
}

/// Network restricted to `keep` filters per conv layer, with every consumer
/// narrowed accordingly.
pub fn restrict_spec(net: &NetworkSpec, keep: &[Vec<usize>]) -> Result<NetworkSpec> {
    let counts: Vec<usize> = keep.iter().map(Vec::len).collect();
    resize_spec(net, &counts)
}

/// Network with `counts[j]` filters in every conv layer `j` (entries for
/// other layers are ignored) and consumers resized to match.
pub fn resize_spec(net: &NetworkSpec, counts: &[usize]) -> Result<NetworkSpec> {
    let sources = channel_sources(net);
    let shapes = net.shapes()?;
    let layers = net
        .layers
        .iter()
        .enumerate()
        .map(|(j, layer)| {
            let in_channels = sources[j].map(|c| counts[c]);
            match *layer {
                LayerSpec::Conv {
                    kernel,
                    in_channels: old_in,
                    stride,
                    padding,
                    ..
                } => LayerSpec::Conv {
                    kernel,
                    in_channels: in_channels.unwrap_or(old_in),
                    out_channels: counts[j],
                    stride,
                    padding,
                },
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => LayerSpec::Dense {
                    in_features: in_channels
                        .map(|c| c * shapes[j].plane())
                        .unwrap_or(in_features),
                    out_features,
                },
                ref other => other.clone(),
            }
        })
        .collect();
    let out = NetworkSpec {
        input: net.input,
        layers,
        classes: net.classes,
    };
    out.shapes()?;
    Ok(out)
}

/// Positions in `net`'s parameter store of every parameter of the
/// sub-network keeping `keep` filters, listed in the sub-network's
/// canonical order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerIndex {
    pub weights: Vec<usize>,
    pub bias: Vec<usize>,
}

pub fn sub_network_indices(net: &NetworkSpec, keep: &[Vec<usize>]) -> Result<Vec<LayerIndex>> {
    let sources = channel_sources(net);
    let shapes = net.shapes()?;
    Ok(net
        .layers
        .iter()
        .enumerate()
        .map(|(j, layer)| match *layer {
            LayerSpec::Conv {
                kernel,
                in_channels,
                ..
            } => {
                let k2 = kernel * kernel;
                let all_in: Vec<usize> = (0..in_channels).collect();
                let ins = sources[j].map_or(&all_in[..], |c| &keep[c][..]);
                let mut weights = Vec::with_capacity(keep[j].len() * ins.len() * k2);
                for &o in &keep[j] {
                    for &i in ins {
                        let base = (o * in_channels + i) * k2;
                        weights.extend(base..base + k2);
                    }
                }
                LayerIndex {
                    weights,
                    bias: keep[j].clone(),
                }
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let weights = match sources[j] {
                    Some(c) => {
                        let plane = shapes[j].plane();
                        let mut w = Vec::with_capacity(out_features * keep[c].len() * plane);
                        for o in 0..out_features {
                            for &ch in &keep[c] {
                                let base = o * in_features + ch * plane;
                                w.extend(base..base + plane);
                            }
                        }
                        w
                    }
                    None => (0..in_features * out_features).collect(),
                };
                LayerIndex {
                    weights,
                    bias: (0..out_features).collect(),
                }
            }
            _ => LayerIndex::default(),
        })
        .collect())
}

/// Gathers the parameters of the sub-network that keeps `keep` filters.
pub fn restrict_params(
    net: &NetworkSpec,
    params: &ParamStore,
    keep: &[Vec<usize>],
) -> Result<ParamStore> {
    params.check(net)?;
    let index = sub_network_indices(net, keep)?;
    Ok(gather(params, &index))
}

pub fn gather(params: &ParamStore, index: &[LayerIndex]) -> ParamStore {
    ParamStore {
        layers: params
            .layers
            .iter()
            .zip(index)
            .map(|(p, ix)| LayerParams {
                weights: ix.weights.iter().map(|&i| p.weights[i]).collect(),
                bias: ix.bias.iter().map(|&i| p.bias[i]).collect(),
            })
            .collect(),
    }
}

/// Inverse of [`gather`]: writes `sub` back into `params`.
pub fn scatter(params: &mut ParamStore, index: &[LayerIndex], sub: &ParamStore) {
    for ((p, ix), s) in params.layers.iter_mut().zip(index).zip(&sub.layers) {
        for (&i, &v) in ix.weights.iter().zip(&s.weights) {
            p.weights[i] = v;
        }
        for (&i, &v) in ix.bias.iter().zip(&s.bias) {
            p.bias[i] = v;
        }
    }
}

/// Per-layer (params, flops) from the closed-form layer formulas.
fn layer_costs(net: &NetworkSpec) -> Result<Vec<(u64, u64)>> {
    let shapes: Vec<TensorShape> = net.shapes()?;
    net.layers
        .iter()
        .enumerate()
        .map(|(j, layer)| {
            if layer.has_params() {
                Ok((layer.param_count() as u64, count_flops(layer, shapes[j])?))
            } else {
                Ok((0, 0))
            }
        })
        .collect()
}

pub fn prune_filters(
    net: &NetworkSpec,
    params: &ParamStore,
    victims: &[FilterRef],
) -> Result<Pruned> {
    let keep = surviving_filters(net, victims)?;
    let pruned_net = restrict_spec(net, &keep)?;
    let pruned_params = restrict_params(net, params, &keep)?;

    let before = layer_costs(net)?;
    let after = layer_costs(&pruned_net)?;
    let mut report = ReductionReport::default();
    for (j, (b, a)) in before.iter().zip(&after).enumerate() {
        report.params_before += b.0;
        report.params_after += a.0;
        report.flops_before += b.1;
        report.flops_after += a.1;
        if net.layers[j].has_params() && b != a {
            report.layers.push(LayerReduction {
                layer: j,
                filters_removed: net.filter_count(j).unwrap_or(0)
                    - pruned_net.filter_count(j).unwrap_or(0),
                params_removed: b.0 - a.0,
                flops_removed: b.1 - a.1,
            });
        }
    }
    Ok(Pruned {
        net: pruned_net,
        params: pruned_params,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward;
    use crate::nn::Tensor;

    fn chain() -> NetworkSpec {
        NetworkSpec::new(
            TensorShape::new(6, 6, 2),
            vec![
                LayerSpec::conv_same(3, 2, 4),
                LayerSpec::Relu,
                LayerSpec::conv_same(3, 4, 6),
                LayerSpec::Relu,
                LayerSpec::max_pool(2),
                LayerSpec::dense(3 * 3 * 6, 3),
                LayerSpec::Softmax,
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn empty_victim_list_is_identity() {
        let net = chain();
        let params = ParamStore::init(&net, 4);
        let p = prune_filters(&net, &params, &[]).unwrap();
        assert_eq!(p.net, net);
        assert!(p.params.bit_eq(&params));
        assert_eq!(p.report.params_removed(), 0);
    }

    #[test]
    fn one_filter_followed_by_six_filter_conv() {
        let net = chain();
        let params = ParamStore::init(&net, 4);
        let p = prune_filters(
            &net,
            &params,
            &[FilterRef {
                layer: 0,
                filter: 1,
            }],
        )
        .unwrap();
        let by_layer: Vec<(usize, u64)> = p
            .report
            .layers
            .iter()
            .map(|l| (l.layer, l.params_removed))
            .collect();
        assert_eq!(by_layer, vec![(0, 19), (2, 54)]);
        assert_eq!(p.report.params_removed(), 19 + 54);
        assert_eq!((params.len() - p.params.len()) as u64, 73);
        // k^2 m_{j-1} w h  +  k^2 m_{j+1} w h
        assert_eq!(p.report.flops_removed(), 9 * 2 * 36 + 9 * 6 * 36);
    }

    #[test]
    fn dense_consumer_loses_map_columns() {
        let net = chain();
        let params = ParamStore::init(&net, 4);
        let p = prune_filters(
            &net,
            &params,
            &[FilterRef {
                layer: 2,
                filter: 5,
            }],
        )
        .unwrap();
        assert_eq!(p.net.layers[5], LayerSpec::dense(45, 3));
        assert_eq!(p.report.layers[1].params_removed, 9 * 3);
        assert_eq!(p.report.layers[1].flops_removed, 2 * 9 * 3);
    }

    #[test]
    fn zero_influence_filter_prunes_without_changing_outputs() {
        let net = chain();
        let mut params = ParamStore::init(&net, 8);
        // Silence every outgoing kernel of filter 2 in layer 0.
        let k2 = 9;
        for o in 0..6 {
            let base = (o * 4 + 2) * k2;
            params.layers[2].weights[base..base + k2]
                .iter_mut()
                .for_each(|w| *w = 0.0);
        }
        let p = prune_filters(
            &net,
            &params,
            &[FilterRef {
                layer: 0,
                filter: 2,
            }],
        )
        .unwrap();
        let input = Tensor::from_vec(
            net.input,
            (0..72)
                .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
                .collect(),
        )
        .unwrap();
        let a = forward(&net, &params, &input).unwrap();
        let b = forward(&p.net, &p.params, &input).unwrap();
        for (x, y) in a.probabilities().iter().zip(b.probabilities()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_victims_rejected() {
        let net = chain();
        let params = ParamStore::init(&net, 4);
        let all: Vec<FilterRef> = (0..4)
            .map(|filter| FilterRef { layer: 0, filter })
            .collect();
        assert!(prune_filters(&net, &params, &all).is_err());
        assert!(prune_filters(
            &net,
            &params,
            &[FilterRef {
                layer: 1,
                filter: 0
            }]
        )
        .is_err());
        assert!(prune_filters(
            &net,
            &params,
            &[FilterRef {
                layer: 0,
                filter: 4
            }]
        )
        .is_err());
        let dup = [
            FilterRef {
                layer: 0,
                filter: 0,
            },
            FilterRef {
                layer: 0,
                filter: 0,
            },
        ];
        assert!(prune_filters(&net, &params, &dup).is_err());
    }
}
