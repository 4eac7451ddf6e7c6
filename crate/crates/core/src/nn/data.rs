//! Labelled image sets: a seeded synthetic generator and a small CSV loader.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::engine::Tensor;
use super::spec::TensorShape;
use crate::error::{Error, Result};
use crate::seed::{self, purpose};

#[derive(Clone, Debug)]
pub struct Sample {
    pub image: Tensor,
    pub label: usize,
}

/// Fixed train/test split of labelled images.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub shape: TensorShape,
    pub classes: usize,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub seed: u64,
}

impl Dataset {
    /// Indices of training samples, grouped by class.
    pub fn train_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.classes];
        for (i, s) in self.train.iter().enumerate() {
            groups[s.label].push(i);
        }
        groups
    }

    fn check(&self) -> Result<()> {
        for s in self.train.iter().chain(&self.test) {
            if s.label >= self.classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} out of range for {} classes",
                    s.label, self.classes
                )));
            }
            if s.image.shape != self.shape {
                return Err(Error::InvalidArgument(format!(
                    "image shape {} differs from dataset shape {}",
                    s.image.shape, self.shape
                )));
            }
        }
        Ok(())
    }

    /// Loads rows of `label,v0,v1,...` where values fill `shape` in
    /// (channel, row, column) order. Rows are shuffled with `seed` and the
    /// last `test_fraction` of them form the test split.
    pub fn from_csv(
        path: impl AsRef<Path>,
        shape: TensorShape,
        classes: usize,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text, shape, classes, test_fraction, seed)
    }

    pub fn parse_csv(
        text: &str,
        shape: TensorShape,
        classes: usize,
        test_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidArgument(
                "test_fraction must be in [0, 1)".into(),
            ));
        }
        let mut samples = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let label: usize = fields
                .next()
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Format(format!("line {}: bad label", n + 1)))?;
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            let image = Tensor::from_vec(shape, values)
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            samples.push(Sample { image, label });
        }
        samples.shuffle(&mut seed::rng(seed, &[purpose::DATA]));
        let n_test = (samples.len() as f64 * test_fraction).round() as usize;
        let test = samples.split_off(samples.len() - n_test);
        let ds = Self {
            shape,
            classes,
            train: samples,
            test,
            seed,
        };
        ds.check()?;
        Ok(ds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternFamily {
    /// A line through the image centre, one orientation per class.
    Bars,
    /// A Gaussian blob, one position on a circle per class.
    Blobs,
    /// A sinusoidal grating, one orientation/frequency per class.
    Gratings,
    /// A ring around the centre, one radius per class.
    Rings,
}

/// Parameters of a class-separable synthetic image set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    /// Maximum random shift of the pattern, in pixels.
    pub jitter: f64,
    pub family: PatternFamily,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            channels: 1,
            classes: 4,
            train_per_class: 60,
            test_per_class: 30,
            noise: 0.25,
            jitter: 1.0,
            family: PatternFamily::Bars,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn shape(&self) -> TensorShape {
        TensorShape::new(self.width, self.height, self.channels)
    }

    pub fn generate(&self) -> Result<Dataset> {
        if !self.shape().is_valid() || self.classes == 0 {
            return Err(Error::InvalidArgument(
                "synthetic dataset needs non-zero dimensions and classes".into(),
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.jitter >= 0.0) {
            return Err(Error::InvalidArgument(
                "noise and jitter must be >= 0".into(),
            ));
        }
        let mut rng = seed::rng(self.seed, &[purpose::DATA]);
        let noise = Normal::new(0.0, self.noise).expect("validated noise");
        let make = |label: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let dx = rng.random_range(-self.jitter..=self.jitter);
            let dy = rng.random_range(-self.jitter..=self.jitter);
            let shape = self.shape();
            let mut data = Vec::with_capacity(shape.len());
            for ch in 0..self.channels {
                let gain = 1.0 - 0.25 * ch as f64 / self.channels as f64;
                for y in 0..self.height {
                    for x in 0..self.width {
                        let v = gain * self.pattern(label, x as f64 - dx, y as f64 - dy);
                        data.push(v + noise.sample(rng));
                    }
                }
            }
            Sample {
                image: Tensor { shape, data },
                label,
            }
        };
        let mut train = Vec::with_capacity(self.classes * self.train_per_class);
        let mut test = Vec::with_capacity(self.classes * self.test_per_class);
        for _ in 0..self.train_per_class {
            for c in 0..self.classes {
                train.push(make(c, &mut rng));
            }
        }
        for _ in 0..self.test_per_class {
            for c in 0..self.classes {
                test.push(make(c, &mut rng));
            }
        }
        Ok(Dataset {
            shape: self.shape(),
            classes: self.classes,
            train,
            test,
            seed: self.seed,
        })
    }

    /// Noise-free intensity in `[0, 1]` of class `c` at pixel `(x, y)`.
    fn pattern(&self, c: usize, x: f64, y: f64) -> f64 {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let (u, v) = (x - cx, y - cy);
        let frac = c as f64 / self.classes as f64;
        let scale = self.width.min(self.height) as f64;
        match self.family {
            PatternFamily::Bars => {
                let theta = PI * frac;
                let d = u * theta.sin() - v * theta.cos();
                (-d * d / (2.0 * 0.7 * 0.7)).exp()
            }
            PatternFamily::Blobs => {
                let phi = 2.0 * PI * frac;
                let r = scale / 4.0;
                let (bx, by) = (r * phi.cos(), r * phi.sin());
                let d2 = (u - bx).powi(2) + (v - by).powi(2);
                (-d2 / (2.0 * 1.2 * 1.2)).exp()
            }
            PatternFamily::Gratings => {
                let theta = PI * frac;
                let period = 3.0 + (c % 2) as f64;
                let t = u * theta.cos() + v * theta.sin();
                0.5 + 0.5 * (2.0 * PI * t / period).cos()
            }
            PatternFamily::Rings => {
                let r0 = 1.0 + frac * (scale / 2.0 - 1.5);
                let d = (u * u + v * v).sqrt() - r0;
                (-d * d / (2.0 * 0.6 * 0.6)).exp()
            }
        }
    }
}
