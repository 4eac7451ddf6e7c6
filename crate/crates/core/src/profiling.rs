//! Per-descendant (accuracy, latency, memory) profiles.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    accuracy, forward, network_flops, NetworkSpec, ParamStore, Sample, Tensor, BYTES_PER_VALUE,
};
use crate::recovery::MultiCapacityModel;
use crate::schema;

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

/// Minimum number of timed inferences in measured mode.
pub const MIN_TIMED_RUNS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LatencyModel {
    /// Median wall time per inference.
    Measured { runs: usize },
    /// Total FLOPs divided by a calibrated throughput.
    FlopsThroughput { flops_per_second: f64 },
}

impl Default for LatencyModel {
    fn default() -> Self {
        // Nominal figure for a single phone-class core.
        Self::FlopsThroughput {
            flops_per_second: 1.0e8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    /// Parameter bytes plus the largest single activation tensor.
    #[default]
    ParamsPlusPeakActivation,
    ParamsOnly,
}

/// Top-1 accuracy on `samples`.
pub fn evaluate_accuracy(
    net: &NetworkSpec,
    params: &ParamStore,
    samples: &[Sample],
) -> Result<f64> {
    accuracy(net, params, samples)
}

/// Seconds per frame at full resource share.
pub fn measure_latency(
    net: &NetworkSpec,
    params: &ParamStore,
    model: &LatencyModel,
    inputs: &[Tensor],
) -> Result<f64> {
    match *model {
        LatencyModel::FlopsThroughput { flops_per_second } => {
            if !(flops_per_second.is_finite() && flops_per_second > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "latency model is uncalibrated (throughput {flops_per_second})"
                )));
            }
            Ok(network_flops(net)? as f64 / flops_per_second)
        }
        LatencyModel::Measured { runs } => {
            let times = time_inferences(net, params, inputs, runs)?;
            Ok(median(&times))
        }
    }
}

/// Wall time of `max(runs, 30)` inferences after a short warm-up, cycling
/// through `inputs`.
pub fn time_inferences(
    net: &NetworkSpec,
    params: &ParamStore,
    inputs: &[Tensor],
    runs: usize,
) -> Result<Vec<f64>> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "latency measurement needs sample inputs".into(),
        ));
    }
    for x in inputs.iter().cycle().take(5) {
        forward(net, params, x)?;
    }
    let runs = runs.max(MIN_TIMED_RUNS);
    let mut times = Vec::with_capacity(runs);
    for x in inputs.iter().cycle().take(runs) {
        let start = Instant::now();
        let out = forward(net, params, x)?;
        std::hint::black_box(&out);
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(times)
}

/// Measured FLOPs per second of `net` on this machine.
pub fn calibrate_throughput(
    net: &NetworkSpec,
    params: &ParamStore,
    inputs: &[Tensor],
    runs: usize,
) -> Result<f64> {
    let t = median(&time_inferences(net, params, inputs, runs)?);
    Ok(network_flops(net)? as f64 / t.max(1e-12))
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Bytes of the largest input or output tensor of any layer.
pub fn peak_activation_bytes(net: &NetworkSpec) -> Result<u64> {
    Ok(net
        .shapes()?
        .iter()
        .map(|s| (s.len() * BYTES_PER_VALUE) as u64)
        .max()
        .unwrap_or(0))
}

pub fn estimate_memory(net: &NetworkSpec, mode: MemoryMode) -> Result<u64> {
    let params = (net.param_count() * BYTES_PER_VALUE) as u64;
    Ok(match mode {
        MemoryMode::ParamsOnly => params,
        MemoryMode::ParamsPlusPeakActivation => params + peak_activation_bytes(net)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub accuracy: String,
    pub latency: String,
    pub memory: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            accuracy: "fraction".into(),
            latency: "seconds".into(),
            memory: "bytes".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelProfile {
    pub level: usize,
    /// Top-1 accuracy on the held-out split.
    pub accuracy: f64,
    /// Inference time per frame with the whole processor.
    pub latency: f64,
    /// Runtime memory footprint.
    pub memory: u64,
    pub param_bytes: u64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelProfile {
    pub schema_version: u32,
    pub app: String,
    pub units: Units,
    pub latency_model: LatencyModel,
    pub memory_mode: MemoryMode,
    pub levels: Vec<LevelProfile>,
    /// Run manifest that produced this file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

impl ModelProfile {
    pub fn validate(&self) -> Result<()> {
        schema::check_version(self.schema_version, PROFILE_SCHEMA_VERSION)?;
        if self.units != Units::default() {
            return Err(Error::ProfileInvariant(format!(
                "unexpected units {:?}",
                self.units
            )));
        }
        if self.levels.is_empty() {
            return Err(Error::ProfileInvariant(format!("{}: no levels", self.app)));
        }
        for (i, row) in self.levels.iter().enumerate() {
            let at = format!("{} level {}", self.app, row.level);
            if row.level != i + 1 {
                return Err(Error::ProfileInvariant(format!(
                    "{at}: levels must be 1, 2, ..."
                )));
            }
            if !(row.accuracy.is_finite() && (0.0..=1.0).contains(&row.accuracy)) {
                return Err(Error::ProfileInvariant(format!(
                    "{at}: accuracy {}",
                    row.accuracy
                )));
            }
            if !(row.latency.is_finite() && row.latency > 0.0) {
                return Err(Error::ProfileInvariant(format!(
                    "{at}: latency {}",
                    row.latency
                )));
            }
            if i > 0 {
                let prev = &self.levels[i - 1];
                if row.memory <= prev.memory {
                    return Err(Error::ProfileInvariant(format!(
                        "{at}: memory {} does not exceed level {} ({})",
                        row.memory, prev.level, prev.memory
                    )));
                }
                let modeled = matches!(self.latency_model, LatencyModel::FlopsThroughput { .. });
                if modeled && row.latency < prev.latency {
                    return Err(Error::ProfileInvariant(format!(
                        "{at}: modeled latency decreases"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn level(&self, level: usize) -> Result<&LevelProfile> {
        self.levels
            .get(level.wrapping_sub(1))
            .ok_or(Error::LevelOutOfRange {
                level,
                levels: self.levels.len(),
            })
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        schema::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = schema::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Profiles every level of `model` on the test split of `test`.
pub fn profile_model(
    app: &str,
    model: &MultiCapacityModel,
    test: &[Sample],
    latency_model: &LatencyModel,
    memory_mode: MemoryMode,
) -> Result<ModelProfile> {
    let inputs: Vec<Tensor> = test.iter().take(8).map(|s| s.image.clone()).collect();
    let mut levels = Vec::with_capacity(model.levels);
    for level in 1..=model.levels {
        let (net, params) = model.extract_descendant(level)?;
        levels.push(LevelProfile {
            level,
            accuracy: evaluate_accuracy(&net, &params, test)?,
            latency: measure_latency(&net, &params, latency_model, &inputs)?,
            memory: estimate_memory(&net, memory_mode)?,
            param_bytes: (net.param_count() * BYTES_PER_VALUE) as u64,
            flops: network_flops(&net)?,
        });
    }
    let profile = ModelProfile {
        schema_version: PROFILE_SCHEMA_VERSION,
        app: app.to_string(),
        units: Units::default(),
        latency_model: *latency_model,
        memory_mode,
        levels,
        manifest: None,
    };
    profile.validate()?;
    Ok(profile)
}

/// Level with the best accuracy-for-size trade-off: the maximum of
/// min-max normalized accuracy minus normalized memory. The smaller level
/// wins ties.
pub fn knee_level(profile: &ModelProfile) -> usize {
    let norm = |v: Vec<f64>| -> Vec<f64> {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        v.iter()
            .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    };
    let acc = norm(profile.levels.iter().map(|l| l.accuracy).collect());
    let mem = norm(profile.levels.iter().map(|l| l.memory as f64).collect());
    let mut best = 0;
    for i in 1..acc.len() {
        if acc[i] - mem[i] > acc[best] - mem[best] {
            best = i;
        }
    }
    best + 1
}
