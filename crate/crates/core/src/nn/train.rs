use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::engine::{forward, loss_and_gradients};
use super::params::{sgd_step, FreezeMask, Gradients, ParamStore};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::seed::{self, purpose};

/// Mini-batch SGD settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            learning_rate: 0.05,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub epochs_run: usize,
    pub epoch_losses: Vec<f64>,
}

/// Trains for up to `cfg.epochs` epochs. After each epoch `stop` is called
/// with the epoch index and current parameters; returning `true` ends
/// training early.
pub fn train(
    net: &NetworkSpec,
    params: &mut ParamStore,
    samples: &[Sample],
    cfg: &TrainConfig,
    freeze: Option<&FreezeMask>,
    mut stop: impl FnMut(usize, &ParamStore) -> Result<bool>,
) -> Result<TrainStats> {
    cfg.validate()?;
    net.validate()?;
    params.check(net)?;
    let mut stats = TrainStats::default();
    if samples.is_empty() {
        return Ok(stats);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(cfg.seed, &[purpose::TRAIN, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = Gradients::zeros(net);
            for &i in batch {
                let s = &samples[i];
                let (g, loss) = loss_and_gradients(net, params, &s.image, s.label)?;
                acc.accumulate(&g);
                total += loss;
            }
            sgd_step(params, &acc, cfg.learning_rate / batch.len() as f64, freeze)?;
        }
        if !params.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameter after epoch {epoch}"
            )));
        }
        stats.epochs_run += 1;
        stats.epoch_losses.push(total / samples.len() as f64);
        if stop(epoch, params)? {
            break;
        }
    }
    Ok(stats)
}

/// Top-1 accuracy over `samples`.
pub fn accuracy(net: &NetworkSpec, params: &ParamStore, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty split".into()));
    }
    let mut correct = 0usize;
    for s in samples {
        if forward(net, params, &s.image)?.predicted_class() == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
