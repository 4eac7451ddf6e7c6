//! Forward and backward passes for a single example.

use super::params::{Gradients, LayerParams, ParamStore};
use super::spec::{LayerSpec, NetworkSpec, TensorShape};
use crate::error::{Error, Result};

/// Dense `(channel, row, column)` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: TensorShape,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: TensorShape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn from_vec(shape: TensorShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values do not fill a {shape} tensor",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    /// Values of one channel plane.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Every intermediate result of a forward pass. `outputs[i]` is the output
/// of layer `i`; the last entry holds the class probabilities.
#[derive(Clone, Debug)]
pub struct Activations {
    pub input: Tensor,
    pub outputs: Vec<Tensor>,
}

impl Activations {
    pub fn probabilities(&self) -> &[f64] {
        &self.outputs.last().unwrap_or(&self.input).data
    }

    /// Input to layer `index`.
    pub fn layer_input(&self, index: usize) -> &Tensor {
        if index == 0 {
            &self.input
        } else {
            &self.outputs[index - 1]
        }
    }

    pub fn predicted_class(&self) -> usize {
        argmax(self.probabilities())
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn forward(net: &NetworkSpec, params: &ParamStore, input: &Tensor) -> Result<Activations> {
    if input.shape != net.input {
        return Err(Error::Shape {
            layer: 0,
            message: format!("network input is {}, got {}", net.input, input.shape),
        });
    }
    if params.layers.len() != net.layers.len() {
        return Err(Error::InvalidArgument(format!(
            "parameter store has {} layers, network has {}",
            params.layers.len(),
            net.layers.len()
        )));
    }
    let mut outputs: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    for (j, layer) in net.layers.iter().enumerate() {
        let x = outputs.last().unwrap_or(input);
        let out_shape = layer.output_shape(j, x.shape)?;
        let p = &params.layers[j];
        if p.weights.len() != layer.weight_count() || p.bias.len() != layer.bias_count() {
            return Err(Error::Shape {
                layer: j,
                message: "parameter storage does not match layer".into(),
            });
        }
        let y = match *layer {
            LayerSpec::Conv {
                kernel,
                stride,
                padding,
                ..
            } => conv_forward(x, p, out_shape, kernel, stride, padding),
            LayerSpec::Relu => Tensor {
                shape: out_shape,
                data: x.data.iter().map(|&v| relu(v)).collect(),
            },
            LayerSpec::MaxPool { size, stride } => pool_forward(x, out_shape, size, stride),
            LayerSpec::Dense { .. } => dense_forward(x, p, out_shape),
            LayerSpec::Softmax => Tensor {
                shape: out_shape,
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

#[inline]
pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn conv_forward(
    x: &Tensor,
    p: &LayerParams,
    out_shape: TensorShape,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (in_c, ih, iw) = (
        x.shape.channels,
        x.shape.height as isize,
        x.shape.width as isize,
    );
    let mut y = Tensor::zeros(out_shape);
    let k2 = kernel * kernel;
    for o in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let mut acc = p.bias[o];
                for i in 0..in_c {
                    let wbase = (o * in_c + i) * k2;
                    for ky in 0..kernel {
                        let sy = (oy * stride + ky) as isize - padding as isize;
                        if sy < 0 || sy >= ih {
                            continue;
                        }
                        for kx in 0..kernel {
                            let sx = (ox * stride + kx) as isize - padding as isize;
                            if sx < 0 || sx >= iw {
                                continue;
                            }
                            acc += p.weights[wbase + ky * kernel + kx]
                                * x.at(i, sy as usize, sx as usize);
                        }
                    }
                }
                let idx = y.index(o, oy, ox);
                y.data[idx] = acc;
            }
        }
    }
    y
}

pub(crate) fn pool_forward(
    x: &Tensor,
    out_shape: TensorShape,
    size: usize,
    stride: usize,
) -> Tensor {
    let mut y = Tensor::zeros(out_shape);
    for c in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let idx = y.index(c, oy, ox);
                y.data[idx] = x.data[pool_argmax(x, c, oy, ox, size, stride)];
            }
        }
    }
    y
}

/// Flat index of the first maximum inside one pooling window.
fn pool_argmax(x: &Tensor, c: usize, oy: usize, ox: usize, size: usize, stride: usize) -> usize {
    let mut best = x.index(c, oy * stride, ox * stride);
    for ky in 0..size {
        for kx in 0..size {
            let idx = x.index(c, oy * stride + ky, ox * stride + kx);
            if x.data[idx] > x.data[best] {
                best = idx;
            }
        }
    }
    best
}

fn dense_forward(x: &Tensor, p: &LayerParams, out_shape: TensorShape) -> Tensor {
    let n_in = x.data.len();
    let data = (0..out_shape.channels)
        .map(|o| {
            let row = &p.weights[o * n_in..(o + 1) * n_in];
            let mut acc = p.bias[o];
            for (w, v) in row.iter().zip(&x.data) {
                acc += w * v;
            }
            acc
        })
        .collect();
    Tensor {
        shape: out_shape,
        data,
    }
}

/// Cross-entropy loss of `target` and its gradient for every parameter.
///
/// The softmax head is differentiated jointly with the loss, so the gradient
/// entering the last dense layer is `p - onehot(target)`.
pub fn backward(
    net: &NetworkSpec,
    params: &ParamStore,
    acts: &Activations,
    target: usize,
) -> Result<(Gradients, f64)> {
    net.validate()?;
    if acts.outputs.len() != net.layers.len() {
        return Err(Error::InvalidArgument(
            "activations do not belong to this network".into(),
        ));
    }
    let probs = acts.probabilities();
    if target >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "target class {target} out of range for {} classes",
            probs.len()
        )));
    }
    let loss = -probs[target].ln();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "cross-entropy loss is {loss} (p[target] = {})",
            probs[target]
        )));
    }

    let mut grads = Gradients::zeros(net);
    let head = net.layers.len() - 1;
    let mut delta: Vec<f64> = probs.to_vec();
    delta[target] -= 1.0;

    for j in (0..head).rev() {
        let x = acts.layer_input(j);
        let need_input_grad = j > 0;
        delta = match net.layers[j] {
            LayerSpec::Conv {
                kernel,
                stride,
                padding,
                ..
            } => conv_backward(
                x,
                &params.layers[j],
                &mut grads.layers[j],
                &delta,
                acts.outputs[j].shape,
                (kernel, stride, padding),
                need_input_grad,
            ),
            LayerSpec::Relu => x
                .data
                .iter()
                .zip(&delta)
                .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                .collect(),
            LayerSpec::MaxPool { size, stride } => {
                let out = &acts.outputs[j];
                let mut dx = vec![0.0; x.data.len()];
                for c in 0..out.shape.channels {
                    for oy in 0..out.shape.height {
                        for ox in 0..out.shape.width {
                            let src = pool_argmax(x, c, oy, ox, size, stride);
                            dx[src] += delta[out.index(c, oy, ox)];
                        }
                    }
                }
                dx
            }
            LayerSpec::Dense { .. } => {
                let p = &params.layers[j];
                let g = &mut grads.layers[j];
                let n_in = x.data.len();
                let mut dx = vec![0.0; if need_input_grad { n_in } else { 0 }];
                for (o, &d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    let grow = &mut g.weights[o * n_in..(o + 1) * n_in];
                    for (gw, &v) in grow.iter_mut().zip(&x.data) {
                        *gw += d * v;
                    }
                    if need_input_grad {
                        let prow = &p.weights[o * n_in..(o + 1) * n_in];
                        for (dxi, &w) in dx.iter_mut().zip(prow) {
                            *dxi += w * d;
                        }
                    }
                }
                dx
            }
            LayerSpec::Softmax => unreachable!("validated: softmax is last"),
        };
    }
    Ok((grads, loss))
}

fn conv_backward(
    x: &Tensor,
    p: &LayerParams,
    g: &mut LayerParams,
    delta: &[f64],
    out_shape: TensorShape,
    (kernel, stride, padding): (usize, usize, usize),
    need_input_grad: bool,
) -> Vec<f64> {
    let (in_c, ih, iw) = (
        x.shape.channels,
        x.shape.height as isize,
        x.shape.width as isize,
    );
    let k2 = kernel * kernel;
    let mut dx = vec![0.0; if need_input_grad { x.data.len() } else { 0 }];
    let plane = out_shape.plane();
    for o in 0..out_shape.channels {
        for oy in 0..out_shape.height {
            for ox in 0..out_shape.width {
                let d = delta[o * plane + oy * out_shape.width + ox];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                for i in 0..in_c {
                    let wbase = (o * in_c + i) * k2;
                    for ky in 0..kernel {
                        let sy = (oy * stride + ky) as isize - padding as isize;
                        if sy < 0 || sy >= ih {
                            continue;
                        }
                        for kx in 0..kernel {
                            let sx = (ox * stride + kx) as isize - padding as isize;
                            if sx < 0 || sx >= iw {
                                continue;
                            }
                            let xi = x.index(i, sy as usize, sx as usize);
                            g.weights[wbase + ky * kernel + kx] += d * x.data[xi];
                            if need_input_grad {
                                dx[xi] += p.weights[wbase + ky * kernel + kx] * d;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Forward then backward for one labelled example.
pub fn loss_and_gradients(
    net: &NetworkSpec,
    params: &ParamStore,
    input: &Tensor,
    target: usize,
) -> Result<(Gradients, f64)> {
    let acts = forward(net, params, input)?;
    backward(net, params, &acts, target)
}

/// Cross-entropy loss only.
pub fn loss(net: &NetworkSpec, params: &ParamStore, input: &Tensor, target: usize) -> Result<f64> {
    let acts = forward(net, params, input)?;
    Ok(-acts.probabilities()[target].ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayerParams;

    fn explicit_conv(input: &[f64], n: usize, kernel: &[f64; 9]) -> Vec<f64> {
        // 3x3 kernel, stride 1, no padding, single channel.
        let m = n - 2;
        let mut out = vec![0.0; m * m];
        for oy in 0..m {
            for ox in 0..m {
                let mut s = 0.0;
                for ky in 0..3 {
                    for kx in 0..3 {
                        s += kernel[ky * 3 + kx] * input[(oy + ky) * n + ox + kx];
                    }
                }
                out[oy * m + ox] = s;
            }
        }
        out
    }

    #[test]
    fn identity_one_by_one_conv() {
        let net = NetworkSpec {
            input: TensorShape::new(3, 2, 1),
            layers: vec![LayerSpec::conv(1, 1, 1)],
            classes: 1,
        };
        let params = ParamStore {
            layers: vec![LayerParams {
                weights: vec![1.0],
                bias: vec![0.0],
            }],
        };
        let input = Tensor::from_vec(net.input, vec![0.5, -1.0, 2.0, 3.25, 0.0, -7.0]).unwrap();
        let acts = forward(&net, &params, &input).unwrap();
        assert_eq!(acts.outputs[0].data, input.data);
    }

    #[test]
    fn conv_matches_loop_nest() {
        let input: Vec<f64> = (0..16).map(|v| (v as f64) * 0.5 - 3.0).collect();
        let kernel = [0.1, -0.2, 0.3, 0.0, 1.0, -1.0, 0.25, 0.5, -0.75];
        let expected = explicit_conv(&input, 4, &kernel);
        let net = NetworkSpec {
            input: TensorShape::new(4, 4, 1),
            layers: vec![LayerSpec::conv(3, 1, 1)],
            classes: 1,
        };
        let params = ParamStore {
            layers: vec![LayerParams {
                weights: kernel.to_vec(),
                bias: vec![0.0],
            }],
        };
        let acts = forward(&net, &params, &Tensor::from_vec(net.input, input).unwrap()).unwrap();
        assert_eq!(acts.outputs[0].shape, TensorShape::new(2, 2, 1));
        for (a, b) in acts.outputs[0].data.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let p = softmax(&[2.5; 4]);
        assert!(p.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = NetworkSpec {
            input: TensorShape::new(4, 4, 1),
            layers: vec![LayerSpec::conv(3, 1, 1)],
            classes: 1,
        };
        let params = ParamStore::zeros(&net);
        let bad = Tensor::zeros(TensorShape::new(5, 4, 1));
        assert!(matches!(
            forward(&net, &params, &bad),
            Err(Error::Shape { layer: 0, .. })
        ));
    }
}
