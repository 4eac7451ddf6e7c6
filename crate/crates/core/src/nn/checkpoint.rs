//! Versioned little-endian checkpoint container.
//!
//! ```text
//! magic      8 bytes  "MCAPCKPT"
//! version    u32
//! seed       u64
//! network    see `write_network`
//! count      u64      number of parameter values
//! payload    count x f64, per layer: weights then biases
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::params::{ParamStore, BYTES_PER_VALUE};
use super::spec::{LayerSpec, NetworkSpec, TensorShape};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MCAPCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: NetworkSpec,
    pub params: ParamStore,
    pub seed: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check(&self.net)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u64(&mut out, self.seed);
        write_network(&mut out, &self.net);
        put_u64(&mut out, self.params.len() as u64);
        for v in self.params.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {version}, expected {VERSION}"
            )));
        }
        let seed = r.u64()?;
        let net = read_network(&mut r)?;
        let count = r.u64()? as usize;
        if count != net.param_count() {
            return Err(Error::Format(format!(
                "payload holds {count} values, network needs {}",
                net.param_count()
            )));
        }
        let mut params = ParamStore::zeros(&net);
        for layer in &mut params.layers {
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *v = r.f64()?;
            }
        }
        r.finish()?;
        Ok(Self { net, params, seed })
    }

    /// Bytes taken by the raw parameter payload.
    pub fn payload_bytes(&self) -> u64 {
        (self.params.len() * BYTES_PER_VALUE) as u64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_usize(out: &mut Vec<u8>, v: usize) {
    put_u32(out, u32::try_from(v).expect("dimension fits in u32"));
}

/// Input shape, class count, then one 21-byte record per layer:
/// a kind tag followed by five u32 fields.
pub(crate) fn write_network(out: &mut Vec<u8>, net: &NetworkSpec) {
    put_usize(out, net.input.width);
    put_usize(out, net.input.height);
    put_usize(out, net.input.channels);
    put_usize(out, net.classes);
    put_usize(out, net.layers.len());
    for layer in &net.layers {
        let (tag, fields) = match *layer {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
                stride,
                padding,
            } => (1u8, [kernel, in_channels, out_channels, stride, padding]),
            LayerSpec::Relu => (2, [0; 5]),
            LayerSpec::MaxPool { size, stride } => (3, [size, stride, 0, 0, 0]),
            LayerSpec::Dense {
                in_features,
                out_features,
            } => (4, [in_features, out_features, 0, 0, 0]),
            LayerSpec::Softmax => (5, [0; 5]),
        };
        out.push(tag);
        for f in fields {
            put_usize(out, f);
        }
    }
}

pub(crate) fn read_network(r: &mut ByteReader<'_>) -> Result<NetworkSpec> {
    let input = TensorShape::new(r.usize()?, r.usize()?, r.usize()?);
    let classes = r.usize()?;
    let n = r.usize()?;
    let mut layers = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let tag = r.u8()?;
        let f = [r.usize()?, r.usize()?, r.usize()?, r.usize()?, r.usize()?];
        layers.push(match tag {
            1 => LayerSpec::Conv {
                kernel: f[0],
                in_channels: f[1],
                out_channels: f[2],
                stride: f[3],
                padding: f[4],
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool {
                size: f[0],
                stride: f[1],
            },
            4 => LayerSpec::Dense {
                in_features: f[0],
                out_features: f[1],
            },
            5 => LayerSpec::Softmax,
            t => return Err(Error::Format(format!("unknown layer tag {t}"))),
        });
    }
    let net = NetworkSpec {
        input,
        layers,
        classes,
    };
    net.shapes()
        .map_err(|e| Error::Format(format!("stored network is inconsistent: {e}")))?;
    Ok(net)
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        if self.take(magic.len())? != magic {
            return Err(Error::Format("bad magic bytes".into()));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
