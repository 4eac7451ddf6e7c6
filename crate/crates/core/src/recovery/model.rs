use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::engine::{pool_forward, relu, softmax};
use crate::nn::params::{fan_in, he_bound};
use crate::nn::{
    accuracy, train, Activations, Dataset, FreezeMask, LayerSpec, NetworkSpec, ParamStore, Tensor,
    TensorShape, TrainConfig, BYTES_PER_VALUE,
};
use crate::pruning::surgery::{
    channel_sources, gather, resize_spec, restrict_spec, scatter, sub_network_indices, LayerIndex,
};
use crate::pruning::PruningRoadmap;
use crate::seed::{self, purpose};

/// Level at which every filter becomes active.
///
/// `filter_levels[j][i]` is the (1-based) introduction level of filter `i`
/// of conv layer `j`, or `0` if the filter has not been grown yet. The
/// entry for a non-conv layer is empty. Level `L` activates every filter
/// with `1 <= level <= L`, so active sets are nested by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityMask {
    pub filter_levels: Vec<Vec<usize>>,
}

/// Introduction level of every parameter, congruent to a [`ParamStore`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLevels {
    pub layers: Vec<(Vec<usize>, Vec<usize>)>,
}

impl ParamLevels {
    pub fn values(&self) -> impl Iterator<Item = usize> + '_ {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    /// Parameters introduced at or below `level`.
    pub fn count_through(&self, level: usize) -> usize {
        self.values().filter(|&l| l >= 1 && l <= level).count()
    }
}

impl CapacityMask {
    pub fn active(&self, layer: usize, level: usize) -> Vec<usize> {
        self.filter_levels[layer]
            .iter()
            .enumerate()
            .filter(|(_, &l)| l >= 1 && l <= level)
            .map(|(i, _)| i)
            .collect()
    }

    /// Active filters of every conv layer at `level` (empty lists elsewhere).
    pub fn keep(&self, level: usize) -> Vec<Vec<usize>> {
        (0..self.filter_levels.len())
            .map(|j| self.active(j, level))
            .collect()
    }

    /// A weight is introduced at the later of the levels of the filter it
    /// belongs to and the input channel it reads; unknown (0) dominates.
    pub fn param_levels(&self, net: &NetworkSpec) -> Result<ParamLevels> {
        let sources = channel_sources(net);
        let shapes = net.shapes()?;
        let combine = |a: usize, b: usize| if a == 0 || b == 0 { 0 } else { a.max(b) };
        let layers = net
            .layers
            .iter()
            .enumerate()
            .map(|(j, layer)| match *layer {
                LayerSpec::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                    ..
                } => {
                    let k2 = kernel * kernel;
                    let mut w = Vec::with_capacity(layer.weight_count());
                    for o in 0..out_channels {
                        let lo = self.filter_levels[j][o];
                        for i in 0..in_channels {
                            let li = sources[j].map_or(1, |c| self.filter_levels[c][i]);
                            w.extend(std::iter::repeat_n(combine(lo, li), k2));
                        }
                    }
                    (w, self.filter_levels[j].clone())
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let plane = shapes[j].plane();
                    let row: Vec<usize> = (0..in_features)
                        .map(|f| sources[j].map_or(1, |c| self.filter_levels[c][f / plane]))
                        .collect();
                    let mut w = Vec::with_capacity(in_features * out_features);
                    for _ in 0..out_features {
                        w.extend_from_slice(&row);
                    }
                    (w, vec![1; out_features])
                }
                _ => (Vec::new(), Vec::new()),
            })
            .collect();
        Ok(ParamLevels { layers })
    }

    /// Every level-`L` active set is contained in the level-`L+1` set, and
    /// grown levels are contiguous from 1.
    pub fn check_nesting(&self, levels: usize) -> Result<()> {
        for (j, fl) in self.filter_levels.iter().enumerate() {
            if fl.iter().any(|&l| l > levels) {
                return Err(Error::Format(format!(
                    "layer {j} has a filter above level {levels}"
                )));
            }
            if !fl.is_empty() && !fl.contains(&1) {
                return Err(Error::Format(format!("layer {j} has no level-1 filter")));
            }
            for l in 1..levels {
                let lower = self.active(j, l);
                let upper = self.active(j, l + 1);
                if !lower.iter().all(|i| upper.contains(i)) {
                    return Err(Error::Format(format!(
                        "layer {j}: level {l} not nested in {}",
                        l + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// What a single growth step added.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowReport {
    pub level: usize,
    pub new_filters: usize,
    pub new_params: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainReport {
    pub level: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub epochs_run: usize,
}

/// One parameter store holding every descendant model.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCapacityModel {
    /// Architecture at full capacity.
    pub net: NetworkSpec,
    pub params: ParamStore,
    pub mask: CapacityMask,
    /// Number of grown levels; level 1 is the seed model.
    pub levels: usize,
    /// Recorded test accuracy per level, `None` until measured.
    pub accuracies: Vec<Option<f64>>,
    /// Seed for initializing grown parameters.
    pub seed: u64,
}

impl MultiCapacityModel {
    /// Places the seed model inside a full-capacity store. The full
    /// architecture comes from the roadmap's vanilla filter counts; filters
    /// keep their vanilla positions, ungrown positions are zero.
    pub fn from_seed(
        seed_net: &NetworkSpec,
        seed_params: &ParamStore,
        roadmap: &PruningRoadmap,
        seed: u64,
    ) -> Result<Self> {
        seed_net.validate()?;
        seed_params.check(seed_net)?;
        if roadmap.conv_layers != seed_net.conv_layers() {
            return Err(Error::InvalidArgument(
                "roadmap conv layers do not match the seed network".into(),
            ));
        }
        let mut counts = vec![0; seed_net.layers.len()];
        let mut survivors: Vec<Vec<usize>> = vec![Vec::new(); seed_net.layers.len()];
        for (&j, &n) in roadmap
            .conv_layers
            .iter()
            .zip(&roadmap.vanilla_filter_counts)
        {
            counts[j] = n;
            survivors[j] = (0..n).collect();
        }
        for r in &roadmap.records {
            let mut victims: Vec<_> = r.victims.iter().collect();
            victims.sort_by_key(|v| std::cmp::Reverse((v.layer, v.filter)));
            for v in victims {
                if survivors[v.layer].get(v.filter) != Some(&v.original) {
                    return Err(Error::Format(format!(
                        "iteration {}: filter {} of layer {} is not original filter {}",
                        r.iteration, v.filter, v.layer, v.original
                    )));
                }
                survivors[v.layer].remove(v.filter);
            }
        }
        let net = resize_spec(seed_net, &counts)?;
        net.validate()?;
        if restrict_spec(&net, &survivors)? != *seed_net {
            return Err(Error::InvalidArgument(
                "replaying the roadmap does not yield the seed architecture".into(),
            ));
        }
        let mut mask = CapacityMask {
            filter_levels: vec![Vec::new(); net.layers.len()],
        };
        for &j in &roadmap.conv_layers {
            let mut fl = vec![0; counts[j]];
            for &i in &survivors[j] {
                fl[i] = 1;
            }
            mask.filter_levels[j] = fl;
        }
        let mut params = ParamStore::zeros(&net);
        let index = sub_network_indices(&net, &survivors)?;
        scatter(&mut params, &index, seed_params);
        Ok(Self {
            net,
            params,
            mask,
            levels: 1,
            accuracies: vec![None],
            seed,
        })
    }

    pub fn param_levels(&self) -> Result<ParamLevels> {
        self.mask.param_levels(&self.net)
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.levels {
            return Err(Error::LevelOutOfRange {
                level,
                levels: self.levels,
            });
        }
        Ok(())
    }

    /// Architecture of descendant `level`.
    pub fn descendant_spec(&self, level: usize) -> Result<NetworkSpec> {
        self.check_level(level)?;
        restrict_spec(&self.net, &self.mask.keep(level))
    }

    fn descendant_index(&self, level: usize) -> Result<Vec<LayerIndex>> {
        self.check_level(level)?;
        sub_network_indices(&self.net, &self.mask.keep(level))
    }

    /// Standalone copy of descendant `level`.
    pub fn extract_descendant(&self, level: usize) -> Result<(NetworkSpec, ParamStore)> {
        let spec = self.descendant_spec(level)?;
        let index = self.descendant_index(level)?;
        Ok((spec, gather(&self.params, &index)))
    }

    /// Bytes of parameters active at each level, `sizes[L - 1]` for level `L`.
    pub fn level_sizes(&self) -> Result<Vec<u64>> {
        let levels = self.param_levels()?;
        Ok((1..=self.levels)
            .map(|l| (levels.count_through(l) * BYTES_PER_VALUE) as u64)
            .collect())
    }

    /// Freeze mask for training level `level`: everything introduced below it.
    pub fn freeze_below(&self, level: usize) -> Result<FreezeMask> {
        let levels = self.param_levels()?;
        let index = self.descendant_index(level)?;
        let mut mask = FreezeMask::default();
        for ((lw, lb), ix) in levels.layers.iter().zip(&index) {
            mask.layers.push(crate::nn::params::LayerMask {
                weights: ix.weights.iter().map(|&i| lw[i] < level).collect(),
                bias: ix.bias.iter().map(|&i| lb[i] < level).collect(),
            });
        }
        Ok(mask)
    }

    /// Adds back the filters of the next footprint in reverse roadmap order
    /// as level `levels + 1`, initializing every newly introduced parameter.
    pub fn grow(&mut self, roadmap: &PruningRoadmap) -> Result<GrowReport> {
        let footprints = roadmap.records.len();
        if self.levels > footprints {
            return Err(Error::RoadmapExhausted {
                levels: self.levels,
            });
        }
        let record = &roadmap.records[footprints - self.levels];
        let level = self.levels + 1;
        for v in &record.victims {
            let slot = self
                .mask
                .filter_levels
                .get_mut(v.layer)
                .and_then(|fl| fl.get_mut(v.original))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "footprint names filter {} of layer {}, outside the model",
                        v.original, v.layer
                    ))
                })?;
            if *slot != 0 {
                return Err(Error::InvalidArgument(format!(
                    "filter {} of layer {} already active at level {}",
                    v.original, v.layer, slot
                )));
            }
            *slot = level;
        }
        let levels = self.param_levels()?;
        let mut new_params = 0;
        for (j, layer) in self.net.layers.iter().enumerate() {
            let (rows, row_len) = match *layer {
                LayerSpec::Conv { out_channels, .. } => {
                    (out_channels, layer.weight_count() / out_channels)
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => (out_features, in_features),
                _ => continue,
            };
            let bound = he_bound(fan_in(layer));
            let (lw, lb) = &levels.layers[j];
            let p = &mut self.params.layers[j];
            for row in 0..rows {
                let mut rng = seed::rng(
                    self.seed,
                    &[purpose::GROW, level as u64, j as u64, row as u64],
                );
                for k in row * row_len..(row + 1) * row_len {
                    if lw[k] == level {
                        p.weights[k] = rng.random_range(-bound..=bound);
                        new_params += 1;
                    }
                }
                if lb[row] == level {
                    p.bias[row] = 0.0;
                    new_params += 1;
                }
            }
        }
        self.levels = level;
        self.accuracies.push(None);
        Ok(GrowReport {
            level,
            new_filters: record.victims.len(),
            new_params,
        })
    }

    /// Trains only the parameters introduced at `level` (the newest level)
    /// and records the resulting test accuracy.
    pub fn retrain_level(
        &mut self,
        level: usize,
        dataset: &Dataset,
        cfg: &TrainConfig,
    ) -> Result<RetrainReport> {
        if level != self.levels {
            return Err(Error::InvalidArgument(format!(
                "only the newest level ({}) can be retrained, got {level}",
                self.levels
            )));
        }
        let (spec, mut sub) = self.extract_descendant(level)?;
        let freeze = self.freeze_below(level)?;
        let accuracy_before = accuracy(&spec, &sub, &dataset.test)?;
        let cfg = TrainConfig {
            seed: seed::derive(cfg.seed, &[level as u64]),
            ..cfg.clone()
        };
        let stats = train(
            &spec,
            &mut sub,
            &dataset.train,
            &cfg,
            Some(&freeze),
            |_, _| Ok(false),
        )
        .map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(format!("retraining level {level}: {m}")),
            other => other,
        })?;
        let index = self.descendant_index(level)?;
        scatter(&mut self.params, &index, &sub);
        let accuracy_after = accuracy(&spec, &sub, &dataset.test)?;
        self.accuracies[level - 1] = Some(accuracy_after);
        Ok(RetrainReport {
            level,
            accuracy_before,
            accuracy_after,
            epochs_run: stats.epochs_run,
        })
    }

    /// Inference of descendant `level` directly on the full store, skipping
    /// inactive filters and input channels. Layer outputs contain only the
    /// active channels, in ascending filter order.
    pub fn forward_masked(&self, level: usize, input: &Tensor) -> Result<Activations> {
        self.check_level(level)?;
        if input.shape != self.net.input {
            return Err(Error::Shape {
                layer: 0,
                message: format!("network input is {}, got {}", self.net.input, input.shape),
            });
        }
        let sources = channel_sources(&self.net);
        let keep = self.mask.keep(level);
        let all_input: Vec<usize> = (0..self.net.input.channels).collect();
        let mut outputs: Vec<Tensor> = Vec::with_capacity(self.net.layers.len());
        let mut channels: &[usize] = &all_input;
        for (j, layer) in self.net.layers.iter().enumerate() {
            let x = outputs.last().unwrap_or(input);
            let p = &self.params.layers[j];
            let y = match *layer {
                LayerSpec::Conv {
                    kernel,
                    in_channels,
                    stride,
                    padding,
                    ..
                } => {
                    let outs = &keep[j];
                    let ih = x.shape.height + 2 * padding;
                    let iw = x.shape.width + 2 * padding;
                    let shape = TensorShape::new(
                        (iw - kernel) / stride + 1,
                        (ih - kernel) / stride + 1,
                        outs.len(),
                    );
                    let mut y = Tensor::zeros(shape);
                    let k2 = kernel * kernel;
                    for (oc, &o) in outs.iter().enumerate() {
                        for oy in 0..shape.height {
                            for ox in 0..shape.width {
                                let mut acc = p.bias[o];
                                for (ic, &i) in channels.iter().enumerate() {
                                    let wbase = (o * in_channels + i) * k2;
                                    for ky in 0..kernel {
                                        let sy = (oy * stride + ky) as isize - padding as isize;
                                        if sy < 0 || sy >= x.shape.height as isize {
                                            continue;
                                        }
                                        for kx in 0..kernel {
                                            let sx = (ox * stride + kx) as isize - padding as isize;
                                            if sx < 0 || sx >= x.shape.width as isize {
                                                continue;
                                            }
                                            acc += p.weights[wbase + ky * kernel + kx]
                                                * x.at(ic, sy as usize, sx as usize);
                                        }
                                    }
                                }
                                let idx = y.index(oc, oy, ox);
                                y.data[idx] = acc;
                            }
                        }
                    }
                    channels = outs;
                    y
                }
                LayerSpec::Relu => Tensor {
                    shape: x.shape,
                    data: x.data.iter().map(|&v| relu(v)).collect(),
                },
                LayerSpec::MaxPool { size, stride } => {
                    let shape = layer.output_shape(j, x.shape)?;
                    pool_forward(x, shape, size, stride)
                }
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => {
                    let plane = x.shape.plane();
                    let cols: Vec<usize> = match sources[j] {
                        Some(_) => channels
                            .iter()
                            .flat_map(|&ch| ch * plane..(ch + 1) * plane)
                            .collect(),
                        None => (0..in_features).collect(),
                    };
                    let data = (0..out_features)
                        .map(|o| {
                            let row = &p.weights[o * in_features..(o + 1) * in_features];
                            let mut acc = p.bias[o];
                            for (&c, v) in cols.iter().zip(&x.data) {
                                acc += row[c] * v;
                            }
                            acc
                        })
                        .collect();
                    Tensor {
                        shape: TensorShape::flat(out_features),
                        data,
                    }
                }
                LayerSpec::Softmax => Tensor {
                    shape: x.shape,
                    data: softmax(&x.data),
                },
            };
            outputs.push(y);
        }
        Ok(Activations {
            input: input.clone(),
            outputs,
        })
    }
}

/// Recovery settings: the retraining budget for every grown level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub retrain: TrainConfig,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            retrain: TrainConfig {
                epochs: 6,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildOutcome {
    pub model: MultiCapacityModel,
    pub grows: Vec<GrowReport>,
    pub retrains: Vec<RetrainReport>,
}

/// Grows the seed model back along the roadmap, one level per footprint,
/// retraining each new level with everything below it frozen.
pub fn build_multi_capacity(
    seed_net: &NetworkSpec,
    seed_params: &ParamStore,
    roadmap: &PruningRoadmap,
    dataset: &Dataset,
    cfg: &RecoveryConfig,
) -> Result<BuildOutcome> {
    let mut model = MultiCapacityModel::from_seed(seed_net, seed_params, roadmap, cfg.seed)?;
    model.accuracies[0] = Some(accuracy(seed_net, seed_params, &dataset.test)?);
    let mut grows = Vec::new();
    let mut retrains = Vec::new();
    for _ in 0..roadmap.records.len() {
        let g = model.grow(roadmap)?;
        let level = g.level;
        grows.push(g);
        retrains.push(model.retrain_level(level, dataset, &cfg.retrain)?);
    }
    model.mask.check_nesting(model.levels)?;
    Ok(BuildOutcome {
        model,
        grows,
        retrains,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, PatternFamily, SyntheticSpec};
    use crate::pruning::roadmap::{PruneConfig, PruneRecord, PrunedFilter, ROADMAP_SCHEMA_VERSION};
    use rand::SeedableRng;

    fn vanilla() -> NetworkSpec {
        NetworkSpec::new(
            TensorShape::new(6, 6, 2),
            vec![
                LayerSpec::conv_same(3, 2, 4),
                LayerSpec::Relu,
                LayerSpec::conv_same(3, 4, 6),
                LayerSpec::Relu,
                LayerSpec::max_pool(2),
                LayerSpec::dense(54, 3),
                LayerSpec::Softmax,
            ],
            3,
        )
        .unwrap()
    }

    fn victim(layer: usize, filter: usize, original: usize) -> PrunedFilter {
        PrunedFilter {
            layer,
            filter,
            original,
        }
    }

    /// Footprint 1 drops filter 1 of the first conv; footprint 2 drops
    /// filter 4 of the second.
    fn roadmap() -> PruningRoadmap {
        let net = vanilla();
        let counts = [[3, 6], [3, 5]];
        let params = counts.map(|c| {
            let mut v = vec![0; net.layers.len()];
            v[0] = c[0];
            v[2] = c[1];
            resize_spec(&net, &v).unwrap().param_count() as u64
        });
        PruningRoadmap {
            schema_version: ROADMAP_SCHEMA_VERSION,
            conv_layers: vec![0, 2],
            vanilla_filter_counts: vec![4, 6],
            vanilla_param_count: net.param_count() as u64,
            vanilla_accuracy: 0.9,
            accuracy_floor: 0.5,
            records: vec![
                PruneRecord {
                    iteration: 1,
                    victims: vec![victim(0, 1, 1)],
                    accuracy: 0.8,
                    param_count: params[0],
                    filter_counts: counts[0].to_vec(),
                },
                PruneRecord {
                    iteration: 2,
                    victims: vec![victim(2, 4, 4)],
                    accuracy: 0.7,
                    param_count: params[1],
                    filter_counts: counts[1].to_vec(),
                },
            ],
            vanilla_checkpoint: None,
            seed_checkpoint: None,
            config: PruneConfig::default(),
            diagnostic: None,
            manifest: None,
        }
    }

    fn seed_model() -> (NetworkSpec, ParamStore, PruningRoadmap) {
        let r = roadmap();
        r.validate().unwrap();
        let (net, params) = r
            .replay(&vanilla(), &ParamStore::init(&vanilla(), 3))
            .unwrap();
        (net, params, r)
    }

    fn random_input(rng: &mut rand_chacha::ChaCha8Rng) -> Tensor {
        let shape = TensorShape::new(6, 6, 2);
        Tensor::from_vec(
            shape,
            (0..shape.len())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect(),
        )
        .unwrap()
    }

    fn dataset() -> Dataset {
        SyntheticSpec {
            width: 6,
            height: 6,
            channels: 2,
            classes: 3,
            train_per_class: 8,
            test_per_class: 4,
            family: PatternFamily::Bars,
            ..SyntheticSpec::default()
        }
        .generate()
        .unwrap()
    }

    #[test]
    fn level_one_is_the_seed() {
        let (net, params, r) = seed_model();
        let m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        assert_eq!(m.net, vanilla());
        let (spec, sub) = m.extract_descendant(1).unwrap();
        assert_eq!(spec, net);
        assert!(sub.bit_eq(&params));
    }

    #[test]
    fn growth_adds_analytic_parameter_counts() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        // Second conv filter over 3 active inputs, plus its 9 dense inputs per class.
        let g = m.grow(&r).unwrap();
        assert_eq!((g.level, g.new_filters, g.new_params), (2, 1, 28 + 27));
        // First conv filter over 2 inputs, plus its kernels in 6 next-layer filters.
        let g = m.grow(&r).unwrap();
        assert_eq!((g.level, g.new_params), (3, 19 + 54));
        assert!(matches!(
            m.grow(&r),
            Err(Error::RoadmapExhausted { levels: 3 })
        ));
        assert_eq!(m.descendant_spec(3).unwrap(), vanilla());
        assert_eq!(
            m.level_sizes().unwrap().last(),
            Some(&(vanilla().param_count() as u64 * 8))
        );
        m.mask.check_nesting(3).unwrap();
    }

    #[test]
    fn grow_then_extract_is_bit_identical() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        let before = m.extract_descendant(1).unwrap();
        m.grow(&r).unwrap();
        let after = m.extract_descendant(1).unwrap();
        assert!(before.1.bit_eq(&after.1));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x = random_input(&mut rng);
        let a = forward(&before.0, &before.1, &x).unwrap();
        let b = forward(&after.0, &after.1, &x).unwrap();
        assert_eq!(a.probabilities(), b.probabilities());
    }

    #[test]
    fn masked_forward_matches_extraction() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        m.grow(&r).unwrap();
        m.grow(&r).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for level in 1..=3 {
            let (spec, sub) = m.extract_descendant(level).unwrap();
            for _ in 0..20 {
                let x = random_input(&mut rng);
                let a = forward(&spec, &sub, &x).unwrap();
                let b = m.forward_masked(level, &x).unwrap();
                for (ta, tb) in a.outputs.iter().zip(&b.outputs) {
                    assert_eq!(ta.shape, tb.shape);
                    assert!(ta
                        .data
                        .iter()
                        .zip(&tb.data)
                        .all(|(p, q)| p.to_bits() == q.to_bits()));
                }
            }
        }
    }

    #[test]
    fn retraining_freezes_lower_levels() {
        let (net, params, r) = seed_model();
        let data = dataset();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        m.grow(&r).unwrap();
        let snapshot = m.params.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        m.retrain_level(2, &data, &cfg).unwrap();
        assert!(m.params.bit_eq(&snapshot));

        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        m.retrain_level(2, &data, &cfg).unwrap();
        let levels = m.param_levels().unwrap();
        let mut changed = 0;
        for ((v, old), l) in m
            .params
            .values()
            .zip(snapshot.values())
            .zip(levels.values())
        {
            if l < 2 {
                assert_eq!(v.to_bits(), old.to_bits());
            } else if v != old {
                changed += 1;
            }
        }
        assert!(changed > 0);
        assert!(m.accuracies[1].is_some());
        assert!(m.retrain_level(1, &data, &cfg).is_err());
    }

    #[test]
    fn freeze_mask_covers_exactly_lower_levels() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        m.grow(&r).unwrap();
        let freeze = m.freeze_below(2).unwrap();
        let frozen = freeze.frozen_count();
        assert_eq!(frozen, net.param_count());
        assert_eq!(
            m.descendant_spec(2).unwrap().param_count() - frozen,
            m.param_levels()
                .unwrap()
                .values()
                .filter(|&l| l == 2)
                .count()
        );
    }

    #[test]
    fn empty_roadmap_gives_single_level() {
        let (_, _, mut r) = seed_model();
        let (vnet, vparams) = (vanilla(), ParamStore::init(&vanilla(), 3));
        r.records.clear();
        r.validate().unwrap();
        let out = build_multi_capacity(&vnet, &vparams, &r, &dataset(), &RecoveryConfig::default())
            .unwrap();
        assert_eq!(out.model.levels, 1);
        assert!(out.model.params.bit_eq(&vparams));
    }

    #[test]
    fn level_bounds() {
        let (net, params, r) = seed_model();
        let m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        assert!(matches!(
            m.extract_descendant(0),
            Err(Error::LevelOutOfRange {
                level: 0,
                levels: 1
            })
        ));
        assert!(m.extract_descendant(2).is_err());
        assert!(m.switch_delta(1, 2).is_err());
    }

    #[test]
    fn file_round_trip_and_size() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        m.grow(&r).unwrap();
        m.grow(&r).unwrap();
        m.accuracies[0] = Some(0.75);
        let bytes = m.to_bytes().unwrap();
        let back = MultiCapacityModel::from_bytes(&bytes).unwrap();
        assert_eq!(back.mask, m.mask);
        assert_eq!(back.accuracies, m.accuracies);
        assert!(back.params.bit_eq(&m.params));

        let largest = crate::nn::Checkpoint {
            net: m.descendant_spec(3).unwrap(),
            params: m.extract_descendant(3).unwrap().1,
            seed: 0,
        };
        let sum: u64 = (1..=3)
            .map(|l| (m.descendant_spec(l).unwrap().param_count() * 8) as u64)
            .sum();
        assert_eq!(m.payload_bytes().unwrap(), largest.payload_bytes());
        assert!(m.payload_bytes().unwrap() < sum);

        let mut bad = bytes.clone();
        bad.truncate(bytes.len() - 1);
        assert!(MultiCapacityModel::from_bytes(&bad).is_err());
    }

    #[test]
    fn switching_between_grown_levels() {
        let (net, params, r) = seed_model();
        let mut m = MultiCapacityModel::from_seed(&net, &params, &r, 0).unwrap();
        m.grow(&r).unwrap();
        m.grow(&r).unwrap();
        let up = m.switch_delta(1, 3).unwrap();
        assert_eq!(up.page_out, 0);
        assert_eq!(up.page_in, (28 + 27 + 19 + 54) * 8);
        assert_eq!(m.switch_delta(3, 1).unwrap().page_out, up.page_in);
    }
}
