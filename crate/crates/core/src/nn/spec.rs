use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width, height and channel count of a feature-map stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl TensorShape {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    /// A `1 x 1 x n` shape, used for dense activations.
    pub const fn flat(n: usize) -> Self {
        Self::new(1, 1, n)
    }

    pub fn plane(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.plane() * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_valid(&self) -> bool {
        self.width >= 1 && self.height >= 1 && self.channels >= 1
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Square `kernel x kernel` convolution with zero padding.
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        stride: usize,
    },
    /// Fully connected layer over the flattened (channel, row, column) input.
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Softmax,
}

impl LayerSpec {
    pub fn conv(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::Conv {
            kernel,
            in_channels,
            out_channels,
            stride: 1,
            padding: 0,
        }
    }

    /// Stride-1 convolution padded to preserve the spatial size (odd kernels).
    pub fn conv_same(kernel: usize, in_channels: usize, out_channels: usize) -> Self {
        Self::Conv {
            kernel,
            in_channels,
            out_channels,
            stride: 1,
            padding: kernel / 2,
        }
    }

    pub fn max_pool(size: usize) -> Self {
        Self::MaxPool { size, stride: size }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self::Dense {
            in_features,
            out_features,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Conv { .. } => "conv",
            Self::Relu => "relu",
            Self::MaxPool { .. } => "maxpool",
            Self::Dense { .. } => "dense",
            Self::Softmax => "softmax",
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Self::Conv { .. })
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Self::Conv { .. } | Self::Dense { .. })
    }

    /// Number of weights (excluding biases).
    pub fn weight_count(&self) -> usize {
        match *self {
            Self::Conv {
                kernel,
                in_channels,
                out_channels,
                ..
            } => out_channels * in_channels * kernel * kernel,
            Self::Dense {
                in_features,
                out_features,
            } => out_features * in_features,
            _ => 0,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            Self::Conv { out_channels, .. } => out_channels,
            Self::Dense { out_features, .. } => out_features,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Output shape for `input`, or a shape error naming `index`.
    pub fn output_shape(&self, index: usize, input: TensorShape) -> Result<TensorShape> {
        let err = |message: String| Error::Shape {
            layer: index,
            message,
        };
        match *self {
            Self::Conv {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
            } => {
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return Err(err(
                        "conv kernel, stride and filter count must be >= 1".into()
                    ));
                }
                if input.channels != in_channels {
                    return Err(err(format!(
                        "conv expects {in_channels} input channels, got {input}"
                    )));
                }
                let pw = input.width + 2 * padding;
                let ph = input.height + 2 * padding;
                if pw < kernel || ph < kernel {
                    return Err(err(format!(
                        "{kernel}x{kernel} kernel does not fit {input}"
                    )));
                }
                Ok(TensorShape::new(
                    (pw - kernel) / stride + 1,
                    (ph - kernel) / stride + 1,
                    out_channels,
                ))
            }
            Self::Relu => Ok(input),
            Self::MaxPool { size, stride } => {
                if size == 0 || stride == 0 {
                    return Err(err("pool size and stride must be >= 1".into()));
                }
                if input.width < size || input.height < size {
                    return Err(err(format!("{size}x{size} pool does not fit {input}")));
                }
                Ok(TensorShape::new(
                    (input.width - size) / stride + 1,
                    (input.height - size) / stride + 1,
                    input.channels,
                ))
            }
            Self::Dense {
                in_features,
                out_features,
            } => {
                if out_features == 0 {
                    return Err(err("dense layer needs at least one output".into()));
                }
                if input.len() != in_features {
                    return Err(err(format!(
                        "dense expects {in_features} features, got {input} = {}",
                        input.len()
                    )));
                }
                Ok(TensorShape::flat(out_features))
            }
            Self::Softmax => {
                if input.plane() != 1 {
                    return Err(err(format!("softmax expects a flat input, got {input}")));
                }
                Ok(input)
            }
        }
    }
}

/// An ordered stack of layers over a fixed input shape.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: TensorShape,
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

impl NetworkSpec {
    pub fn new(input: TensorShape, layers: Vec<LayerSpec>, classes: usize) -> Result<Self> {
        let net = Self {
            input,
            layers,
            classes,
        };
        net.validate()?;
        Ok(net)
    }

    /// Input shape followed by the output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<TensorShape>> {
        if !self.input.is_valid() {
            return Err(Error::InvalidNetwork(format!(
                "input shape {} has a zero dimension",
                self.input
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        shapes.push(self.input);
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, *shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Checks the shape chain and that the network ends in `dense(classes) -> softmax`.
    pub fn validate(&self) -> Result<()> {
        self.shapes()?;
        if self.classes == 0 {
            return Err(Error::InvalidNetwork("class count must be >= 1".into()));
        }
        let n = self.layers.len();
        if n < 2 || self.layers[n - 1] != LayerSpec::Softmax {
            return Err(Error::InvalidNetwork(
                "last layer must be softmax over the class count".into(),
            ));
        }
        if self.layers[..n - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::InvalidNetwork("softmax may only appear last".into()));
        }
        match self.layers[n - 2] {
            LayerSpec::Dense { out_features, .. } if out_features == self.classes => Ok(()),
            _ => Err(Error::InvalidNetwork(format!(
                "softmax must be preceded by a dense layer with {} outputs",
                self.classes
            ))),
        }
    }

    pub fn conv_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].is_conv())
            .collect()
    }

    /// Output channel count of layer `index` if it is a conv layer.
    pub fn filter_count(&self, index: usize) -> Option<usize> {
        match self.layers.get(index)? {
            LayerSpec::Conv { out_channels, .. } => Some(*out_channels),
            _ => None,
        }
    }

    /// Next layer after `index` that owns parameters, i.e. the layer that
    /// consumes the feature maps produced by `index`.
    pub fn consumer_of(&self, index: usize) -> Option<usize> {
        (index + 1..self.layers.len()).find(|&i| self.layers[i].has_params())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NetworkSpec {
        NetworkSpec::new(
            TensorShape::new(8, 8, 1),
            vec![
                LayerSpec::conv_same(3, 1, 4),
                LayerSpec::Relu,
                LayerSpec::max_pool(2),
                LayerSpec::conv(3, 4, 6),
                LayerSpec::Relu,
                LayerSpec::dense(2 * 2 * 6, 3),
                LayerSpec::Softmax,
            ],
            3,
        )
        .unwrap()
    }

    #[test]
    fn shape_chain() {
        let shapes = toy().shapes().unwrap();
        assert_eq!(shapes[1], TensorShape::new(8, 8, 4));
        assert_eq!(shapes[3], TensorShape::new(4, 4, 4));
        assert_eq!(shapes[4], TensorShape::new(2, 2, 6));
        assert_eq!(shapes[6], TensorShape::flat(3));
    }

    #[test]
    fn channel_mismatch_names_layer() {
        let mut net = toy();
        net.layers[3] = LayerSpec::conv(3, 5, 6);
        match net.validate() {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn requires_softmax_head() {
        let mut net = toy();
        net.layers.pop();
        assert!(matches!(net.validate(), Err(Error::InvalidNetwork(_))));
        let mut net = toy();
        net.classes = 4;
        assert!(net.validate().is_err());
    }

    #[test]
    fn consumer_skips_parameterless_layers() {
        let net = toy();
        assert_eq!(net.consumer_of(0), Some(3));
        assert_eq!(net.consumer_of(3), Some(5));
        assert_eq!(net.consumer_of(5), None);
    }
}
