//! Exact parameter and FLOP counts.
//!
//! A conv layer with `m_out` filters of size `k x k x m_in` producing
//! `w x h` maps costs `m_out * k^2 * m_in * w * h` multiply-accumulates,
//! counted as one FLOP each. Dense layers are counted as `2 * in * out`
//! (one multiply plus one add per weight). Biases, activations and pooling
//! are not counted.

use serde::{Deserialize, Serialize};

use super::params::{ParamStore, BYTES_PER_VALUE};
use super::spec::{LayerSpec, NetworkSpec, TensorShape};
use crate::error::{Error, Result};

pub fn count_flops(layer: &LayerSpec, input: TensorShape) -> Result<u64> {
    match *layer {
        LayerSpec::Conv {
            kernel,
            in_channels,
            out_channels,
            ..
        } => {
            let out = layer.output_shape(0, input)?;
            Ok((out_channels * kernel * kernel * in_channels * out.width * out.height) as u64)
        }
        LayerSpec::Dense {
            in_features,
            out_features,
        } => {
            layer.output_shape(0, input)?;
            Ok(2 * (in_features * out_features) as u64)
        }
        _ => Err(Error::UnsupportedLayer {
            layer: 0,
            kind: layer.kind(),
            operation: "count_flops",
        }),
    }
}

/// Total FLOPs of one forward pass.
pub fn network_flops(net: &NetworkSpec) -> Result<u64> {
    let shapes = net.shapes()?;
    let mut total = 0;
    for (j, layer) in net.layers.iter().enumerate() {
        if layer.has_params() {
            total += count_flops(layer, shapes[j]).map_err(|e| match e {
                Error::Shape { message, .. } => Error::Shape { layer: j, message },
                other => other,
            })?;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub count: u64,
    pub bytes: u64,
}

impl ParamCount {
    pub fn from_count(count: usize) -> Self {
        Self {
            count: count as u64,
            bytes: (count * BYTES_PER_VALUE) as u64,
        }
    }
}

/// Parameter count of `params`, checked against the analytic count of `net`.
pub fn count_params(net: &NetworkSpec, params: &ParamStore) -> Result<ParamCount> {
    params.check(net)?;
    let analytic = net.param_count();
    debug_assert_eq!(analytic, params.len());
    Ok(ParamCount::from_count(analytic))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_flops_formula() {
        let layer = LayerSpec::conv_same(3, 2, 4);
        assert_eq!(
            count_flops(&layer, TensorShape::new(8, 8, 2)).unwrap(),
            4608
        );
        let unit = LayerSpec::conv(1, 1, 1);
        assert_eq!(count_flops(&unit, TensorShape::new(1, 1, 1)).unwrap(), 1);
    }

    #[test]
    fn one_filter_fewer_saves_k2_min_wh() {
        let full = count_flops(&LayerSpec::conv_same(3, 2, 4), TensorShape::new(8, 8, 2)).unwrap();
        let less = count_flops(&LayerSpec::conv_same(3, 2, 3), TensorShape::new(8, 8, 2)).unwrap();
        assert_eq!(full - less, 1152);
    }

    #[test]
    fn dense_and_unsupported() {
        assert_eq!(
            count_flops(&LayerSpec::dense(6, 3), TensorShape::flat(6)).unwrap(),
            36
        );
        assert!(matches!(
            count_flops(&LayerSpec::Relu, TensorShape::flat(6)),
            Err(Error::UnsupportedLayer { kind: "relu", .. })
        ));
    }

    #[test]
    fn conv_param_count() {
        let net = NetworkSpec {
            input: TensorShape::new(8, 8, 2),
            layers: vec![LayerSpec::conv_same(3, 2, 4)],
            classes: 1,
        };
        let pc = count_params(&net, &ParamStore::zeros(&net)).unwrap();
        assert_eq!(pc.count, 76);
        assert_eq!(pc.bytes, 608);

        let empty = NetworkSpec {
            input: TensorShape::new(1, 1, 1),
            layers: vec![],
            classes: 1,
        };
        assert_eq!(
            count_params(&empty, &ParamStore::zeros(&empty))
                .unwrap()
                .count,
            0
        );
    }
}
