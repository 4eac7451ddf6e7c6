use rand::Rng;

use super::spec::{LayerSpec, NetworkSpec};
use crate::error::{Error, Result};
use crate::seed::{self, purpose};

pub const BYTES_PER_VALUE: usize = std::mem::size_of::<f64>();

/// Weights and biases of one layer.
///
/// Conv weights are laid out `(out, in, ky, kx)`; dense weights `(out, in)`.
/// Parameter-free layers hold two empty vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(layer: &LayerSpec) -> Self {
        Self {
            weights: vec![0.0; layer.weight_count()],
            bias: vec![0.0; layer.bias_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat filter-indexed parameter storage for a [`NetworkSpec`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub layers: Vec<LayerParams>,
}

impl ParamStore {
    pub fn zeros(net: &NetworkSpec) -> Self {
        Self {
            layers: net.layers.iter().map(LayerParams::zeros).collect(),
        }
    }

    /// He-uniform initialization: weights drawn from `U(-b, b)` with
    /// `b = sqrt(6 / fan_in)`, biases zero. Each layer has its own stream
    /// derived from `seed`, so adding a layer does not perturb the others.
    pub fn init(net: &NetworkSpec, seed: u64) -> Self {
        let mut store = Self::zeros(net);
        for (j, layer) in net.layers.iter().enumerate() {
            if !layer.has_params() {
                continue;
            }
            let mut rng = seed::rng(seed, &[purpose::INIT, j as u64]);
            let bound = he_bound(fan_in(layer));
            for w in &mut store.layers[j].weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        store
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Verifies that every layer's storage matches `net`.
    pub fn check(&self, net: &NetworkSpec) -> Result<()> {
        if self.layers.len() != net.layers.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter store has {} layers, network has {}",
                self.layers.len(),
                net.layers.len()
            )));
        }
        for (j, (p, layer)) in self.layers.iter().zip(&net.layers).enumerate() {
            if p.weights.len() != layer.weight_count() || p.bias.len() != layer.bias_count() {
                return Err(Error::Shape {
                    layer: j,
                    message: format!(
                        "store holds {}+{} values, {} layer needs {}+{}",
                        p.weights.len(),
                        p.bias.len(),
                        layer.kind(),
                        layer.weight_count(),
                        layer.bias_count()
                    ),
                });
            }
        }
        Ok(())
    }

    /// All values in canonical order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0` and comparing NaN payloads.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .values()
                .map(f64::to_bits)
                .eq(other.values().map(f64::to_bits))
    }
}

pub fn fan_in(layer: &LayerSpec) -> usize {
    match *layer {
        LayerSpec::Conv {
            kernel,
            in_channels,
            ..
        } => kernel * kernel * in_channels,
        LayerSpec::Dense { in_features, .. } => in_features,
        _ => 0,
    }
}

pub fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in.max(1) as f64).sqrt()
}

/// Per-parameter gradients, structurally congruent to a [`ParamStore`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros(net: &NetworkSpec) -> Self {
        Self {
            layers: net.layers.iter().map(LayerParams::zeros).collect(),
        }
    }

    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights
                .iter_mut()
                .zip(&b.weights)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= factor);
            l.bias.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }
}

/// Per-parameter freeze flags; `true` means the value must not change.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreezeMask {
    pub layers: Vec<LayerMask>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LayerMask {
    pub weights: Vec<bool>,
    pub bias: Vec<bool>,
}

impl FreezeMask {
    pub fn uniform(params: &ParamStore, frozen: bool) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerMask {
                    weights: vec![frozen; l.weights.len()],
                    bias: vec![frozen; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn frozen_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.iter().chain(&l.bias).filter(|&&f| f).count())
            .sum()
    }
}

/// Plain SGD update `p -= lr * g`, skipping every frozen parameter.
pub fn sgd_step(
    params: &mut ParamStore,
    grads: &Gradients,
    learning_rate: f64,
    freeze: Option<&FreezeMask>,
) -> Result<()> {
    let congruent = |a: usize, b: usize, what: &str, j: usize| {
        if a == b {
            Ok(())
        } else {
            Err(Error::Shape {
                layer: j,
                message: format!("{what} length mismatch: {a} vs {b}"),
            })
        }
    };
    if params.layers.len() != grads.layers.len()
        || freeze.is_some_and(|m| m.layers.len() != params.layers.len())
    {
        return Err(Error::InvalidArgument(
            "parameters, gradients and freeze mask differ in layer count".into(),
        ));
    }
    for (j, (p, g)) in params.layers.iter_mut().zip(&grads.layers).enumerate() {
        congruent(p.weights.len(), g.weights.len(), "weight gradient", j)?;
        congruent(p.bias.len(), g.bias.len(), "bias gradient", j)?;
        let mask = freeze.map(|m| &m.layers[j]);
        if let Some(m) = mask {
            congruent(p.weights.len(), m.weights.len(), "weight mask", j)?;
            congruent(p.bias.len(), m.bias.len(), "bias mask", j)?;
        }
        update(
            &mut p.weights,
            &g.weights,
            mask.map(|m| &m.weights[..]),
            learning_rate,
        );
        update(
            &mut p.bias,
            &g.bias,
            mask.map(|m| &m.bias[..]),
            learning_rate,
        );
    }
    Ok(())
}

fn update(values: &mut [f64], grads: &[f64], frozen: Option<&[bool]>, lr: f64) {
    if lr == 0.0 {
        return;
    }
    match frozen {
        Some(frozen) => {
            for ((v, g), &f) in values.iter_mut().zip(grads).zip(frozen) {
                if !f {
                    *v -= lr * g;
                }
            }
        }
        None => values.iter_mut().zip(grads).for_each(|(v, g)| *v -= lr * g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::TensorShape;

    fn net() -> NetworkSpec {
        NetworkSpec::new(
            TensorShape::new(4, 4, 1),
            vec![
                LayerSpec::conv(3, 1, 2),
                LayerSpec::Relu,
                LayerSpec::dense(8, 2),
                LayerSpec::Softmax,
            ],
            2,
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = ParamStore::init(&net(), 11);
        let b = ParamStore::init(&net(), 11);
        assert!(a.bit_eq(&b));
        assert!(!a.bit_eq(&ParamStore::init(&net(), 12)));
        let bound = he_bound(9);
        assert!(a.layers[0].weights.iter().all(|w| w.abs() <= bound));
        assert!(a.layers[0].bias.iter().all(|&b| b == 0.0));
        a.check(&net()).unwrap();
    }

    #[test]
    fn single_scalar_update() {
        let mut p = ParamStore {
            layers: vec![LayerParams {
                weights: vec![1.0],
                bias: vec![],
            }],
        };
        let g = Gradients {
            layers: vec![LayerParams {
                weights: vec![0.5],
                bias: vec![],
            }],
        };
        sgd_step(&mut p, &g, 0.1, None).unwrap();
        assert_eq!(p.layers[0].weights[0], 0.95);
    }

    #[test]
    fn full_freeze_and_zero_lr_are_noops() {
        let before = ParamStore::init(&net(), 3);
        let mut grads = Gradients::zeros(&net());
        grads.layers[0].weights.iter_mut().for_each(|g| *g = 1.0);
        grads.layers[2].bias.iter_mut().for_each(|g| *g = -2.0);

        let mut p = before.clone();
        let mask = FreezeMask::uniform(&p, true);
        sgd_step(&mut p, &grads, 0.5, Some(&mask)).unwrap();
        assert!(p.bit_eq(&before));

        let mut p = before.clone();
        sgd_step(&mut p, &grads, 0.0, None).unwrap();
        assert!(p.bit_eq(&before));
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut p = ParamStore::init(&net(), 3);
        let mut g = Gradients::zeros(&net());
        g.layers[0].weights.pop();
        assert!(matches!(
            sgd_step(&mut p, &g, 0.1, None),
            Err(Error::Shape { layer: 0, .. })
        ));
    }
}
