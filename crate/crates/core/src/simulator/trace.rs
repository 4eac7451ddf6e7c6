use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::seed::{self, purpose};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Create,
    Kill,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Second at which the event happens.
    pub t: u64,
    pub kind: EventKind,
    pub app: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkTrace {
    pub schema_version: u32,
    pub apps: Vec<String>,
    pub duration: u64,
    pub min_concurrency: usize,
    pub max_concurrency: usize,
    pub seed: u64,
    pub events: Vec<TraceEvent>,
}

impl BenchmarkTrace {
    /// Running set during each second `[t, t + 1)`, in arrival order.
    pub fn running_sets(&self) -> Vec<Vec<String>> {
        let mut running: Vec<String> = Vec::new();
        let mut out = Vec::with_capacity(self.duration as usize);
        let mut events = self.events.iter().peekable();
        for t in 0..self.duration {
            while let Some(e) = events.next_if(|e| e.t == t) {
                match e.kind {
                    EventKind::Create => running.push(e.app.clone()),
                    EventKind::Kill => running.retain(|a| *a != e.app),
                }
            }
            out.push(running.clone());
        }
        out
    }

    /// Checks event ordering, that only stopped apps are created and only
    /// running apps are killed, and that concurrency stays in bounds.
    pub fn validate(&self) -> Result<()> {
        crate::schema::check_version(self.schema_version, TRACE_SCHEMA_VERSION)?;
        let mut running: Vec<&str> = Vec::new();
        let mut last = 0;
        for e in &self.events {
            if e.t < last || e.t >= self.duration {
                return Err(Error::Format(format!(
                    "event at t={} out of order or range",
                    e.t
                )));
            }
            if !self.apps.contains(&e.app) {
                return Err(Error::Format(format!("unknown application {}", e.app)));
            }
            let here = running.contains(&e.app.as_str());
            match e.kind {
                EventKind::Create if here => {
                    return Err(Error::Format(format!(
                        "t={}: {} is already running",
                        e.t, e.app
                    )))
                }
                EventKind::Kill if !here => {
                    return Err(Error::Format(format!(
                        "t={}: {} is not running",
                        e.t, e.app
                    )))
                }
                EventKind::Create => running.push(&e.app),
                EventKind::Kill => running.retain(|a| *a != e.app),
            }
            last = e.t;
        }
        for (t, set) in self.running_sets().iter().enumerate() {
            if !(self.min_concurrency..=self.max_concurrency).contains(&set.len()) {
                return Err(Error::Format(format!(
                    "t={t}: {} running apps outside [{}, {}]",
                    set.len(),
                    self.min_concurrency,
                    self.max_concurrency
                )));
            }
        }
        Ok(())
    }

    /// Seconds spent at each concurrency level (index = number of apps).
    pub fn concurrency_histogram(&self) -> Vec<u64> {
        let mut h = vec![0; self.max_concurrency + 1];
        for set in self.running_sets() {
            h[set.len()] += 1;
        }
        h
    }

    /// Running seconds per application, in `apps` order.
    pub fn running_time(&self) -> Vec<u64> {
        let mut time = vec![0; self.apps.len()];
        for set in self.running_sets() {
            for a in set {
                let i = self.apps.iter().position(|x| *x == a).expect("known app");
                time[i] += 1;
            }
        }
        time
    }
}

/// Launches `initial` random apps at time zero, then every second either
/// creates a random stopped app (probability `p_create`), kills a random
/// running app (probability `p_kill`), or does nothing. Events that would
/// leave the concurrency bounds are dropped.
pub fn generate_trace(apps: &[String], cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkTrace> {
    cfg.validate_trace(apps.len())?;
    let mut rng = seed::rng(seed, &[purpose::TRACE]);
    let mut running: Vec<String> = Vec::new();
    let mut events = Vec::new();
    let mut create = |t: u64, running: &mut Vec<String>, rng: &mut rand_chacha::ChaCha8Rng| {
        let stopped: Vec<&String> = apps.iter().filter(|a| !running.contains(a)).collect();
        let app = (*stopped.choose(rng).expect("an app is stopped")).clone();
        running.push(app.clone());
        events.push(TraceEvent {
            t,
            kind: EventKind::Create,
            app,
        });
    };
    for _ in 0..cfg.initial {
        create(0, &mut running, &mut rng);
    }
    let mut kills = Vec::new();
    for t in 1..cfg.duration {
        let r: f64 = rng.random();
        if r < cfg.p_create {
            if running.len() < cfg.max_concurrency {
                create(t, &mut running, &mut rng);
            }
        } else if r < cfg.p_create + cfg.p_kill && running.len() > cfg.min_concurrency {
            let i = rng.random_range(0..running.len());
            let app = running.remove(i);
            kills.push(TraceEvent {
                t,
                kind: EventKind::Kill,
                app,
            });
        }
    }
    events.extend(kills);
    events.sort_by_key(|e| e.t);
    let trace = BenchmarkTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        apps: apps.to_vec(),
        duration: cfg.duration,
        min_concurrency: cfg.min_concurrency,
        max_concurrency: cfg.max_concurrency,
        seed,
        events,
    };
    debug_assert!(trace.validate().is_ok());
    Ok(trace)
}

/// `cfg.repetitions` traces, repetition `r` seeded from `(cfg.seed, r)`.
pub fn generate_traces(apps: &[String], cfg: &BenchmarkConfig) -> Result<Vec<BenchmarkTrace>> {
    (0..cfg.repetitions)
        .map(|r| generate_trace(apps, cfg, seed::derive(cfg.seed, &[r as u64])))
        .collect()
}
