//! Multi-capacity model container.
//!
//! ```text
//! magic      8 bytes  "MCAPMULT"
//! version    u32
//! seed       u64
//! network    full-capacity architecture (same encoding as checkpoints)
//! levels     u32
//! mask       per layer: u32 count, then count x u32 filter levels
//! accuracy   levels x f64 (NaN = not measured)
//! offsets    levels x u64, cumulative value count through each level
//! payload    values grouped by introduction level, canonical order within
//! ```
//!
//! Loading a prefix of the payload up to `offsets[L - 1]` is enough to run
//! level `L`; parameters not yet introduced are zero.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{CapacityMask, MultiCapacityModel};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{put_u32, put_u64, read_network, write_network, ByteReader};
use crate::nn::ParamStore;

pub const MAGIC: &[u8; 8] = b"MCAPMULT";
pub const VERSION: u32 = 1;

impl MultiCapacityModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.check(&self.net)?;
        let levels = self.param_levels()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u64(&mut out, self.seed);
        write_network(&mut out, &self.net);
        put_u32(&mut out, self.levels as u32);
        for fl in &self.mask.filter_levels {
            put_u32(&mut out, fl.len() as u32);
            for &l in fl {
                put_u32(&mut out, l as u32);
            }
        }
        for l in 0..self.levels {
            let a = self
                .accuracies
                .get(l)
                .copied()
                .flatten()
                .unwrap_or(f64::NAN);
            out.extend_from_slice(&a.to_le_bytes());
        }
        for l in 1..=self.levels {
            put_u64(&mut out, levels.count_through(l) as u64);
        }
        for l in 1..=self.levels {
            for (v, lv) in self.params.values().zip(levels.values()) {
                if lv == l {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "multi-capacity version {version}, expected {VERSION}"
            )));
        }
        let seed = r.u64()?;
        let net = read_network(&mut r)?;
        let n = r.usize()?;
        if n == 0 {
            return Err(Error::Format("model has no levels".into()));
        }
        let mut filter_levels = Vec::with_capacity(net.layers.len());
        for (j, layer) in net.layers.iter().enumerate() {
            let count = r.usize()?;
            let expected = if layer.is_conv() {
                net.filter_count(j).unwrap_or(0)
            } else {
                0
            };
            if count != expected {
                return Err(Error::Format(format!(
                    "mask for layer {j} has {count} entries, expected {expected}"
                )));
            }
            filter_levels.push((0..count).map(|_| r.usize()).collect::<Result<Vec<_>>>()?);
        }
        let mask = CapacityMask { filter_levels };
        mask.check_nesting(n)?;
        let accuracies = (0..n)
            .map(|_| r.f64().map(|a| (!a.is_nan()).then_some(a)))
            .collect::<Result<Vec<_>>>()?;
        let offsets = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let mut model = Self {
            params: ParamStore::zeros(&net),
            net,
            mask,
            levels: n,
            accuracies,
            seed,
        };
        let levels = model.param_levels()?;
        for (l, &off) in (1..=n).zip(&offsets) {
            if levels.count_through(l) as u64 != off {
                return Err(Error::Format(format!(
                    "offset table disagrees with mask at level {l}"
                )));
            }
        }
        let level_of: Vec<usize> = levels.values().collect();
        for l in 1..=n {
            let mut k = 0;
            for layer in &mut model.params.layers {
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    if level_of[k] == l {
                        *v = r.f64()?;
                    }
                    k += 1;
                }
            }
        }
        r.finish()?;
        Ok(model)
    }

    /// Bytes taken by the parameter payload alone.
    pub fn payload_bytes(&self) -> Result<u64> {
        Ok(self.level_sizes()?.last().copied().unwrap_or(0))
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
