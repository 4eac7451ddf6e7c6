//! Independent reference implementations used as test oracles. Nothing here
//! calls into the engine's forward or backward passes.

#![allow(dead_code)]

use multicap::nn::{Dataset, LayerSpec, NetworkSpec, ParamStore, Sample, Tensor, TensorShape};
use multicap::pruning::{FilterRef, Triplet};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Output of every layer, computed with plain loop nests.
pub fn reference_forward(net: &NetworkSpec, params: &ParamStore, input: &[f64]) -> Vec<Vec<f64>> {
    let mut shape = net.input;
    let mut x = input.to_vec();
    let mut outs = Vec::new();
    for (j, layer) in net.layers.iter().enumerate() {
        let p = &params.layers[j];
        let (y, next) = match *layer {
            LayerSpec::Conv {
                kernel: k,
                in_channels: cin,
                out_channels: cout,
                stride: s,
                padding: pad,
            } => {
                let ow = (shape.width + 2 * pad - k) / s + 1;
                let oh = (shape.height + 2 * pad - k) / s + 1;
                let mut y = vec![0.0; cout * oh * ow];
                for o in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = p.bias[o];
                            for c in 0..cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * s + ky) as isize - pad as isize;
                                        let ix = (ox * s + kx) as isize - pad as isize;
                                        if iy < 0
                                            || ix < 0
                                            || iy >= shape.height as isize
                                            || ix >= shape.width as isize
                                        {
                                            continue;
                                        }
                                        let v = x[(c * shape.height + iy as usize) * shape.width
                                            + ix as usize];
                                        acc += p.weights[((o * cin + c) * k + ky) * k + kx] * v;
                                    }
                                }
                            }
                            y[(o * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                (y, TensorShape::new(ow, oh, cout))
            }
            LayerSpec::Relu => (x.iter().map(|v| v.max(0.0)).collect(), shape),
            LayerSpec::MaxPool { size, stride } => {
                let ow = (shape.width - size) / stride + 1;
                let oh = (shape.height - size) / stride + 1;
                let mut y = Vec::with_capacity(shape.channels * oh * ow);
                for c in 0..shape.channels {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut m = f64::NEG_INFINITY;
                            for dy in 0..size {
                                for dx in 0..size {
                                    m = m.max(
                                        x[(c * shape.height + oy * stride + dy) * shape.width
                                            + ox * stride
                                            + dx],
                                    );
                                }
                            }
                            y.push(m);
                        }
                    }
                }
                (y, TensorShape::new(ow, oh, shape.channels))
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                let y = (0..out_features)
                    .map(|o| {
                        p.bias[o]
                            + (0..in_features)
                                .map(|i| p.weights[o * in_features + i] * x[i])
                                .sum::<f64>()
                    })
                    .collect();
                (y, TensorShape::flat(out_features))
            }
            LayerSpec::Softmax => {
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
                let z: f64 = e.iter().sum();
                (e.iter().map(|v| v / z).collect(), shape)
            }
        };
        outs.push(y.clone());
        x = y;
        shape = next;
    }
    outs
}

pub fn reference_loss(net: &NetworkSpec, params: &ParamStore, input: &[f64], target: usize) -> f64 {
    -reference_forward(net, params, input).last().unwrap()[target].ln()
}

/// Largest relative error between the engine's analytic gradient and
/// central differences of the reference loss, over every parameter.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn max_gradient_error(
    net: &NetworkSpec,
    params: &ParamStore,
    input: &Tensor,
    target: usize,
    h: f64,
    floor: f64,
) -> f64 {
    let (grads, _) = multicap::nn::loss_and_gradients(net, params, input, target).unwrap();
    let mut worst: f64 = 0.0;
    for (j, layer) in params.layers.iter().enumerate() {
        for (is_bias, len) in [(false, layer.weights.len()), (true, layer.bias.len())] {
            for i in 0..len {
                let mut plus = params.clone();
                let mut minus = params.clone();
                *slot(&mut plus, j, is_bias, i) += h;
                *slot(&mut minus, j, is_bias, i) -= h;
                let numeric = (reference_loss(net, &plus, &input.data, target)
                    - reference_loss(net, &minus, &input.data, target))
                    / (2.0 * h);
                let analytic = if is_bias {
                    grads.layers[j].bias[i]
                } else {
                    grads.layers[j].weights[i]
                };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

fn slot(p: &mut ParamStore, layer: usize, bias: bool, i: usize) -> &mut f64 {
    if bias {
        &mut p.layers[layer].bias[i]
    } else {
        &mut p.layers[layer].weights[i]
    }
}

/// Parameter count and FLOPs of a whole network from the closed-form
/// per-layer formulas: conv `m k^2 m' + m` params and `m k^2 m' w h` FLOPs,
/// dense `in out + out` params and `2 in out` FLOPs.
pub fn analytic_cost(net: &NetworkSpec) -> (u64, u64) {
    let mut shape = net.input;
    let (mut params, mut flops) = (0u64, 0u64);
    for layer in &net.layers {
        match *layer {
            LayerSpec::Conv {
                kernel: k,
                in_channels: cin,
                out_channels: cout,
                stride: s,
                padding: pad,
            } => {
                let ow = (shape.width + 2 * pad - k) / s + 1;
                let oh = (shape.height + 2 * pad - k) / s + 1;
                params += (cout * k * k * cin + cout) as u64;
                flops += (cout * k * k * cin * ow * oh) as u64;
                shape = TensorShape::new(ow, oh, cout);
            }
            LayerSpec::MaxPool { size, stride } => {
                shape = TensorShape::new(
                    (shape.width - size) / stride + 1,
                    (shape.height - size) / stride + 1,
                    shape.channels,
                );
            }
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                params += (in_features * out_features + out_features) as u64;
                flops += 2 * (in_features * out_features) as u64;
                shape = TensorShape::flat(out_features);
            }
            LayerSpec::Relu | LayerSpec::Softmax => {}
        }
    }
    (params, flops)
}

/// Random conv stack ending in a dense softmax head. Conv layers use
/// random kernels, strides and padding, optionally followed by ReLU and a
/// 2x2 pool.
pub fn random_net(rng: &mut ChaCha8Rng, max_convs: usize) -> NetworkSpec {
    loop {
        let mut shape = TensorShape::new(
            rng.random_range(5..=9),
            rng.random_range(5..=9),
            rng.random_range(1..=3),
        );
        let input = shape;
        let mut layers = Vec::new();
        let convs = rng.random_range(1..=max_convs);
        let mut ok = true;
        for _ in 0..convs {
            let k = rng.random_range(1..=3);
            let pad = rng.random_range(0..=k / 2);
            let stride = if rng.random_bool(0.2) { 2 } else { 1 };
            let out = rng.random_range(2..=5);
            let conv = LayerSpec::Conv {
                kernel: k,
                in_channels: shape.channels,
                out_channels: out,
                stride,
                padding: pad,
            };
            match conv.output_shape(0, shape) {
                Ok(s) => shape = s,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
            layers.push(conv);
            if rng.random_bool(0.7) {
                layers.push(LayerSpec::Relu);
            }
            if rng.random_bool(0.3) && shape.width >= 2 && shape.height >= 2 {
                layers.push(LayerSpec::max_pool(2));
                shape = TensorShape::new(shape.width / 2, shape.height / 2, shape.channels);
            }
        }
        if !ok {
            continue;
        }
        let classes = rng.random_range(2..=4);
        layers.push(LayerSpec::dense(shape.len(), classes));
        layers.push(LayerSpec::Softmax);
        if let Ok(net) = NetworkSpec::new(input, layers, classes) {
            return net;
        }
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, shape: TensorShape) -> Tensor {
    Tensor {
        shape,
        data: (0..shape.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    }
}

/// The architecture left after removing `removed[j]` filters from every
/// conv layer `j`, built by rewriting channel counts directly.
pub fn expected_after(net: &NetworkSpec, removed: &[usize]) -> NetworkSpec {
    let mut layers = Vec::new();
    let mut channels = net.input.channels;
    let mut shape = net.input;
    for (j, layer) in net.layers.iter().enumerate() {
        let next = layer.output_shape(j, shape).unwrap();
        layers.push(match *layer {
            LayerSpec::Conv {
                kernel,
                out_channels,
                stride,
                padding,
                ..
            } => {
                let out = out_channels - removed[j];
                let l = LayerSpec::Conv {
                    kernel,
                    in_channels: channels,
                    out_channels: out,
                    stride,
                    padding,
                };
                channels = out;
                l
            }
            LayerSpec::Dense { out_features, .. } => {
                let features = channels * shape.width * shape.height;
                channels = out_features;
                LayerSpec::dense(features, out_features)
            }
            ref other => other.clone(),
        });
        shape = next;
    }
    NetworkSpec::new(net.input, layers, net.classes).unwrap()
}

pub fn random_victims(rng: &mut ChaCha8Rng, net: &NetworkSpec) -> (Vec<FilterRef>, Vec<usize>) {
    let mut victims = Vec::new();
    let mut removed = vec![0; net.layers.len()];
    for j in net.conv_layers() {
        let m = net.filter_count(j).unwrap();
        let r = rng.random_range(0..m);
        for f in sample(rng, m, r) {
            victims.push(FilterRef {
                layer: j,
                filter: f,
            });
        }
        removed[j] = r;
    }
    (victims, removed)
}

pub fn random_dataset(rng: &mut ChaCha8Rng, net: &NetworkSpec, n: usize) -> Dataset {
    let train = (0..n)
        .map(|i| Sample {
            image: random_input(rng, net.input),
            label: i % net.classes,
        })
        .collect();
    Dataset {
        shape: net.input,
        classes: net.classes,
        train,
        test: Vec::new(),
        seed: 0,
    }
}

/// Sum over triplets of `|F(a) - F(n)|^2 - |F(a) - F(p)|^2` for the conv
/// output map `F` of one filter, recomputing every forward pass.
pub fn trr_brute_force(
    net: &NetworkSpec,
    params: &ParamStore,
    ds: &Dataset,
    triplets: &[Triplet],
    layer: usize,
) -> Vec<f64> {
    let filters = net.filter_count(layer).unwrap();
    let map = |i: usize, f: usize| -> Vec<f64> {
        let out = &reference_forward(net, params, &ds.train[i].image.data)[layer];
        let plane = out.len() / filters;
        out[f * plane..(f + 1) * plane].to_vec()
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    (0..filters)
        .map(|f| {
            triplets
                .iter()
                .map(|t| {
                    let (a, p, n) = (map(t.anchor, f), map(t.positive, f), map(t.negative, f));
                    dist(&a, &n) - dist(&a, &p)
                })
                .sum()
        })
        .collect()
}
