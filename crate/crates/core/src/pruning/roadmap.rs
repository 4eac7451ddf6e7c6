use std::path::Path;

use serde::{Deserialize, Serialize};

use super::score::{l1_scores_all, rank_order, trr_scores_all, FilterScore, Ranking};
use super::surgery::{prune_filters, FilterRef};
use super::triplet::sample_triplets;
use crate::error::{Error, Result};
use crate::nn::{accuracy, train, Dataset, NetworkSpec, ParamStore, TrainConfig};
use crate::seed;

pub const ROADMAP_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    /// Minimum test accuracy every footprint must keep.
    pub accuracy_floor: f64,
    /// Fraction of the currently active conv filters removed per iteration.
    pub prune_fraction: f64,
    pub max_iterations: usize,
    pub min_filters_per_layer: usize,
    /// Triplets sampled per iteration for TRR ranking.
    pub triplets: usize,
    pub ranking: Ranking,
    /// Retraining budget per iteration; stops early once the floor is met.
    pub retrain: TrainConfig,
    pub seed: u64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            accuracy_floor: 0.7,
            prune_fraction: 0.2,
            max_iterations: 4,
            min_filters_per_layer: 1,
            triplets: 200,
            ranking: Ranking::Trr,
            retrain: TrainConfig {
                epochs: 4,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accuracy_floor) {
            return Err(Error::InvalidArgument(
                "accuracy_floor must be in [0, 1]".into(),
            ));
        }
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "prune_fraction must be in (0, 1)".into(),
            ));
        }
        if self.min_filters_per_layer == 0 {
            return Err(Error::InvalidArgument(
                "min_filters_per_layer must be >= 1".into(),
            ));
        }
        self.retrain.validate()
    }
}

/// A pruned filter, indexed both in the network it was removed from and in
/// the original (vanilla) network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedFilter {
    pub layer: usize,
    pub filter: usize,
    pub original: usize,
}

/// One footprint: the filters pruned in an iteration and the accuracy of
/// the pruned model after retraining.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneRecord {
    pub iteration: usize,
    pub victims: Vec<PrunedFilter>,
    pub accuracy: f64,
    pub param_count: u64,
    /// Filter count of every conv layer after this iteration, in layer order.
    pub filter_counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningRoadmap {
    pub schema_version: u32,
    pub conv_layers: Vec<usize>,
    pub vanilla_filter_counts: Vec<usize>,
    pub vanilla_param_count: u64,
    pub vanilla_accuracy: f64,
    pub accuracy_floor: f64,
    pub records: Vec<PruneRecord>,
    pub vanilla_checkpoint: Option<String>,
    pub seed_checkpoint: Option<String>,
    pub config: PruneConfig,
    pub diagnostic: Option<String>,
    pub manifest: Option<String>,
}

impl PruningRoadmap {
    pub fn footprints(&self) -> usize {
        self.records.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != ROADMAP_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "roadmap schema {} (expected {ROADMAP_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut last_params = self.vanilla_param_count;
        for (i, r) in self.records.iter().enumerate() {
            if r.iteration != i + 1 {
                return Err(Error::Format(format!(
                    "record {i} has iteration {}",
                    r.iteration
                )));
            }
            if !(0.0..=1.0).contains(&r.accuracy) || r.accuracy < self.accuracy_floor {
                return Err(Error::Format(format!(
                    "iteration {} accuracy {} violates floor {}",
                    r.iteration, r.accuracy, self.accuracy_floor
                )));
            }
            if r.param_count >= last_params {
                return Err(Error::Format(format!(
                    "iteration {} does not reduce the parameter count",
                    r.iteration
                )));
            }
            last_params = r.param_count;
        }
        Ok(())
    }

    /// Re-applies every record to the vanilla model, yielding the seed model.
    pub fn replay(
        &self,
        net: &NetworkSpec,
        params: &ParamStore,
    ) -> Result<(NetworkSpec, ParamStore)> {
        let mut net = net.clone();
        let mut params = params.clone();
        for r in &self.records {
            let victims: Vec<FilterRef> = r
                .victims
                .iter()
                .map(|v| FilterRef {
                    layer: v.layer,
                    filter: v.filter,
                })
                .collect();
            let pruned = prune_filters(&net, &params, &victims)?;
            net = pruned.net;
            params = pruned.params;
        }
        Ok((net, params))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Picks the `count` lowest-ranked filters while leaving at least
/// `min_per_layer` filters in every layer. `filter_counts[j]` is the
/// current filter count of layer `j` (zero for non-conv layers).
pub fn select_victims(
    scores: &[FilterScore],
    count: usize,
    filter_counts: &[usize],
    min_per_layer: usize,
) -> Vec<FilterRef> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(rank_order);
    let mut remaining = filter_counts.to_vec();
    let mut victims = Vec::with_capacity(count);
    for s in ranked {
        if victims.len() == count {
            break;
        }
        if remaining[s.layer] > min_per_layer {
            remaining[s.layer] -= 1;
            victims.push(FilterRef {
                layer: s.layer,
                filter: s.filter,
            });
        }
    }
    victims.sort();
    victims
}

/// Scores of every conv filter under `ranking`.
pub fn score_filters(
    net: &NetworkSpec,
    params: &ParamStore,
    dataset: &Dataset,
    ranking: Ranking,
    triplets: usize,
    seed: u64,
) -> Result<Vec<FilterScore>> {
    match ranking {
        Ranking::Trr => {
            let ts = sample_triplets(dataset, triplets, seed)?;
            trr_scores_all(net, params, &dataset.train, &ts)
        }
        Ranking::L1 => l1_scores_all(net, params),
    }
}

/// Retrains until `floor` is met or the epoch budget runs out; returns the
/// final test accuracy.
pub fn retrain_to_floor(
    net: &NetworkSpec,
    params: &mut ParamStore,
    dataset: &Dataset,
    cfg: &TrainConfig,
    floor: f64,
) -> Result<f64> {
    let mut acc = accuracy(net, params, &dataset.test)?;
    train(net, params, &dataset.train, cfg, None, |_, p| {
        acc = accuracy(net, p, &dataset.test)?;
        Ok(acc >= floor)
    })?;
    Ok(acc)
}

#[derive(Clone, Debug)]
pub struct PruneOutcome {
    pub roadmap: PruningRoadmap,
    /// The seed model: the last footprint, or the vanilla model when the
    /// roadmap is empty.
    pub net: NetworkSpec,
    pub params: ParamStore,
}

/// Iteratively prunes the globally lowest-ranked filters and retrains,
/// recording a footprint per iteration until the floor can no longer be met.
pub fn iterative_prune(
    net: &NetworkSpec,
    params: &ParamStore,
    dataset: &Dataset,
    cfg: &PruneConfig,
) -> Result<PruneOutcome> {
    cfg.validate()?;
    net.validate()?;
    let conv_layers = net.conv_layers();
    let counts_of = |n: &NetworkSpec| -> Vec<usize> {
        conv_layers
            .iter()
            .map(|&j| n.filter_count(j).unwrap())
            .collect()
    };
    let vanilla_accuracy = accuracy(net, params, &dataset.test)?;
    let mut roadmap = PruningRoadmap {
        schema_version: ROADMAP_SCHEMA_VERSION,
        conv_layers: conv_layers.clone(),
        vanilla_filter_counts: counts_of(net),
        vanilla_param_count: net.param_count() as u64,
        vanilla_accuracy,
        accuracy_floor: cfg.accuracy_floor,
        records: Vec::new(),
        vanilla_checkpoint: None,
        seed_checkpoint: None,
        config: cfg.clone(),
        diagnostic: None,
        manifest: None,
    };
    let mut current_net = net.clone();
    let mut current_params = params.clone();
    if vanilla_accuracy < cfg.accuracy_floor {
        roadmap.diagnostic = Some(format!(
            "vanilla accuracy {vanilla_accuracy:.4} is already below the floor {:.4}",
            cfg.accuracy_floor
        ));
        return Ok(PruneOutcome {
            roadmap,
            net: current_net,
            params: current_params,
        });
    }

    // origin[j][i]: vanilla index of the filter now at position i of layer j.
    let mut origin: Vec<Vec<usize>> = net
        .layers
        .iter()
        .enumerate()
        .map(|(j, _)| (0..net.filter_count(j).unwrap_or(0)).collect())
        .collect();

    for iteration in 1..=cfg.max_iterations {
        let scores = score_filters(
            &current_net,
            &current_params,
            dataset,
            cfg.ranking,
            cfg.triplets,
            seed::derive(cfg.seed, &[iteration as u64]),
        )?;
        let counts: Vec<usize> = origin.iter().map(Vec::len).collect();
        let active: usize = counts.iter().sum();
        let target = ((active as f64) * cfg.prune_fraction).ceil() as usize;
        let victims = select_victims(&scores, target, &counts, cfg.min_filters_per_layer);
        if victims.is_empty() {
            roadmap.diagnostic = Some(format!(
                "iteration {iteration}: every layer is at the minimum filter count"
            ));
            break;
        }
        let pruned = prune_filters(&current_net, &current_params, &victims)?;
        let mut candidate = pruned.params;
        let retrain = TrainConfig {
            seed: seed::derive(cfg.retrain.seed, &[iteration as u64]),
            ..cfg.retrain.clone()
        };
        let acc = retrain_to_floor(
            &pruned.net,
            &mut candidate,
            dataset,
            &retrain,
            cfg.accuracy_floor,
        )?;
        if acc < cfg.accuracy_floor {
            roadmap.diagnostic = Some(if roadmap.records.is_empty() {
                format!(
                    "first pruning iteration reached only {acc:.4} after retraining, below the floor {:.4}",
                    cfg.accuracy_floor
                )
            } else {
                format!(
                    "stopped at iteration {iteration}: accuracy {acc:.4} below the floor {:.4}",
                    cfg.accuracy_floor
                )
            });
            break;
        }
        let record_victims = victims
            .iter()
            .map(|v| PrunedFilter {
                layer: v.layer,
                filter: v.filter,
                original: origin[v.layer][v.filter],
            })
            .collect();
        for v in victims.iter().rev() {
            origin[v.layer].remove(v.filter);
        }
        current_net = pruned.net;
        current_params = candidate;
        roadmap.records.push(PruneRecord {
            iteration,
            victims: record_victims,
            accuracy: acc,
            param_count: current_net.param_count() as u64,
            filter_counts: counts_of(&current_net),
        });
    }
    if roadmap.diagnostic.is_none() && roadmap.records.len() == cfg.max_iterations {
        roadmap.diagnostic = Some(format!("reached max_iterations = {}", cfg.max_iterations));
    }
    Ok(PruneOutcome {
        roadmap,
        net: current_net,
        params: current_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn victims_respect_layer_minimum() {
        let scores = vec![
            FilterScore {
                layer: 0,
                filter: 0,
                score: 0.1,
            },
            FilterScore {
                layer: 0,
                filter: 1,
                score: 0.2,
            },
            FilterScore {
                layer: 2,
                filter: 0,
                score: 0.3,
            },
            FilterScore {
                layer: 2,
                filter: 1,
                score: 0.4,
            },
            FilterScore {
                layer: 2,
                filter: 2,
                score: 0.5,
            },
        ];
        let v = select_victims(&scores, 3, &[2, 0, 3], 1);
        assert_eq!(
            v,
            vec![
                FilterRef {
                    layer: 0,
                    filter: 0
                },
                FilterRef {
                    layer: 2,
                    filter: 0
                },
                FilterRef {
                    layer: 2,
                    filter: 1
                },
            ]
        );
    }

    #[test]
    fn config_validation() {
        let mut c = PruneConfig::default();
        c.validate().unwrap();
        c.prune_fraction = 1.0;
        assert!(c.validate().is_err());
        c.prune_fraction = 0.2;
        c.accuracy_floor = 1.5;
        assert!(c.validate().is_err());
    }
}
