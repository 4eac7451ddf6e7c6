use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::{BenchmarkTrace, EventKind};
use super::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::recovery::switch_delta_from_sizes;
use crate::scheduler::{Objective, ScheduleAgent, Tenant};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// How the running applications are served.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    /// Greedy scheduling over descendants; `alpha` overrides every app's knob.
    ResourceAware {
        objective: Objective,
        caching: bool,
        alpha: Option<f64>,
    },
    /// Fixed knee descendant per app, equal compute split.
    Baseline,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AppMetrics {
    pub app: String,
    pub running_seconds: u64,
    pub frames: f64,
    /// Frame-weighted accuracy sum; `accuracy = accuracy_frames / frames`.
    pub accuracy_frames: f64,
    pub accuracy: f64,
    pub frame_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentLog {
    pub app: String,
    pub level: usize,
    pub share: f64,
}

/// One change of the running set and the plan that answered it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub trace: usize,
    pub t: u64,
    pub kind: EventKind,
    pub app: String,
    pub rejected: bool,
    pub plan: Vec<AssignmentLog>,
    pub page_in: u64,
    pub page_out: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub schema_version: u32,
    pub scheme: Scheme,
    pub traces: usize,
    pub apps: Vec<AppMetrics>,
    /// Mean over applications of their average accuracy.
    pub accuracy: f64,
    /// Accuracy averaged over every processed frame.
    pub frame_weighted_accuracy: f64,
    /// Mean over applications of their average frame rate.
    pub frame_rate: f64,
    /// Bytes paged with nested descendants.
    pub page_in: u64,
    pub page_out: u64,
    /// Bytes the same level changes would page with independent models.
    pub independent_page_in: u64,
    pub independent_page_out: u64,
    pub scheduler_invocations: usize,
    pub allocation_steps: usize,
    pub rejected_creates: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<EventLog>,
}

impl SimMetrics {
    pub fn paged_bytes(&self) -> u64 {
        self.page_in + self.page_out
    }

    pub fn independent_paged_bytes(&self) -> u64 {
        self.independent_page_in + self.independent_page_out
    }

    pub fn app(&self, id: &str) -> Option<&AppMetrics> {
        self.apps.iter().find(|a| a.app == id)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::schema::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = crate::schema::from_str(text)?;
        crate::schema::check_version(m.schema_version, METRICS_SCHEMA_VERSION)?;
        Ok(m)
    }
}

/// Gains of `aware` over `baseline`, computed per application and averaged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Mean accuracy difference in percentage points.
    pub accuracy_gain: f64,
    /// Mean ratio of frame rates.
    pub speedup: f64,
    pub per_app: Vec<(String, f64, f64)>,
}

pub fn compare(aware: &SimMetrics, baseline: &SimMetrics) -> Comparison {
    let per_app: Vec<(String, f64, f64)> = aware
        .apps
        .iter()
        .filter_map(|a| {
            let b = baseline.app(&a.app)?;
            (a.frames > 0.0 && b.frames > 0.0).then(|| {
                (
                    a.app.clone(),
                    100.0 * (a.accuracy - b.accuracy),
                    a.frame_rate / b.frame_rate,
                )
            })
        })
        .collect();
    let n = per_app.len().max(1) as f64;
    Comparison {
        accuracy_gain: per_app.iter().map(|p| p.1).sum::<f64>() / n,
        speedup: if per_app.is_empty() {
            1.0
        } else {
            per_app.iter().map(|p| p.2).sum::<f64>() / n
        },
        per_app,
    }
}

#[derive(Default)]
struct Totals {
    apps: BTreeMap<String, AppMetrics>,
    page_in: u64,
    page_out: u64,
    independent_page_in: u64,
    independent_page_out: u64,
    invocations: usize,
    steps: usize,
    rejected: usize,
    events: Vec<EventLog>,
}

impl Totals {
    fn absorb(&mut self, other: Totals) {
        for (id, a) in other.apps {
            let m = self.apps.entry(id).or_insert_with(|| AppMetrics {
                app: a.app.clone(),
                ..AppMetrics::default()
            });
            m.running_seconds += a.running_seconds;
            m.frames += a.frames;
            m.accuracy_frames += a.accuracy_frames;
        }
        self.page_in += other.page_in;
        self.page_out += other.page_out;
        self.independent_page_in += other.independent_page_in;
        self.independent_page_out += other.independent_page_out;
        self.invocations += other.invocations;
        self.steps += other.steps;
        self.rejected += other.rejected;
        self.events.extend(other.events);
    }
}

/// Level and compute share of a running application.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Slot {
    level: usize,
    share: f64,
}

pub fn simulate(
    trace: &BenchmarkTrace,
    cfg: &BenchmarkConfig,
    scheme: Scheme,
    log: bool,
) -> Result<SimMetrics> {
    simulate_many(std::slice::from_ref(trace), cfg, scheme, log)
}

pub fn simulate_baseline(
    trace: &BenchmarkTrace,
    cfg: &BenchmarkConfig,
    log: bool,
) -> Result<SimMetrics> {
    simulate(trace, cfg, Scheme::Baseline, log)
}

/// Replays every trace and pools the per-application totals.
pub fn simulate_many(
    traces: &[BenchmarkTrace],
    cfg: &BenchmarkConfig,
    scheme: Scheme,
    log: bool,
) -> Result<SimMetrics> {
    cfg.validate()?;
    for trace in traces {
        trace.validate()?;
    }
    // Repetitions run on worker threads; results are merged in trace order.
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(traces.len().max(1));
    let mut per_trace: Vec<(usize, Result<Totals>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..traces.len())
                        .step_by(workers)
                        .map(|i| {
                            let mut t = Totals::default();
                            (
                                i,
                                run_trace(i, &traces[i], cfg, scheme, log, &mut t).map(|()| t),
                            )
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    per_trace.sort_by_key(|(i, _)| *i);
    let mut totals = Totals::default();
    for (_, t) in per_trace {
        totals.absorb(t?);
    }
    let apps: Vec<AppMetrics> = totals
        .apps
        .into_values()
        .map(|mut a| {
            a.accuracy = if a.frames > 0.0 {
                a.accuracy_frames / a.frames
            } else {
                0.0
            };
            a.frame_rate = a.frames / a.running_seconds.max(1) as f64;
            a
        })
        .collect();
    let active: Vec<&AppMetrics> = apps.iter().filter(|a| a.running_seconds > 0).collect();
    let n = active.len().max(1) as f64;
    let frames: f64 = active.iter().map(|a| a.frames).sum();
    Ok(SimMetrics {
        schema_version: METRICS_SCHEMA_VERSION,
        scheme,
        traces: traces.len(),
        accuracy: active.iter().map(|a| a.accuracy).sum::<f64>() / n,
        frame_weighted_accuracy: if frames > 0.0 {
            active.iter().map(|a| a.accuracy_frames).sum::<f64>() / frames
        } else {
            0.0
        },
        frame_rate: active.iter().map(|a| a.frame_rate).sum::<f64>() / n,
        apps,
        page_in: totals.page_in,
        page_out: totals.page_out,
        independent_page_in: totals.independent_page_in,
        independent_page_out: totals.independent_page_out,
        scheduler_invocations: totals.invocations,
        allocation_steps: totals.steps,
        rejected_creates: totals.rejected,
        events: totals.events,
    })
}

fn run_trace(
    index: usize,
    trace: &BenchmarkTrace,
    cfg: &BenchmarkConfig,
    scheme: Scheme,
    log: bool,
    totals: &mut Totals,
) -> Result<()> {
    let mut agent = match scheme {
        Scheme::ResourceAware {
            objective, caching, ..
        } => Some(ScheduleAgent::new(
            cfg.scheduler.clone(),
            objective,
            caching,
        )),
        Scheme::Baseline => None,
    };
    let alpha = match scheme {
        Scheme::ResourceAware { alpha, .. } => alpha,
        Scheme::Baseline => None,
    };
    let mut running: Vec<String> = Vec::new();
    let mut slots: BTreeMap<String, Slot> = BTreeMap::new();
    let mut events = trace.events.iter().peekable();
    for t in 0..trace.duration {
        while let Some(e) = events.next_if(|e| e.t == t) {
            let mut candidate = running.clone();
            match e.kind {
                EventKind::Create => candidate.push(e.app.clone()),
                EventKind::Kill => {
                    if !running.contains(&e.app) {
                        // Its creation was rejected earlier.
                        continue;
                    }
                    candidate.retain(|a| *a != e.app);
                }
            }
            let plan = match &mut agent {
                Some(agent) => aware_plan(agent, cfg, &candidate, alpha),
                None => baseline_plan(cfg, &candidate),
            };
            let new_slots = match plan {
                Ok(p) => p,
                Err(Error::ResourceInfeasible { .. }) if e.kind == EventKind::Create => {
                    totals.rejected += 1;
                    if log {
                        totals.events.push(EventLog {
                            trace: index,
                            t,
                            kind: e.kind,
                            app: e.app.clone(),
                            rejected: true,
                            plan: Vec::new(),
                            page_in: 0,
                            page_out: 0,
                        });
                    }
                    continue;
                }
                Err(err) => return Err(err),
            };
            totals.invocations += 1;
            let (page_in, page_out) = account_paging(cfg, &slots, &new_slots, totals)?;
            if log {
                totals.events.push(EventLog {
                    trace: index,
                    t,
                    kind: e.kind,
                    app: e.app.clone(),
                    rejected: false,
                    plan: candidate
                        .iter()
                        .map(|a| AssignmentLog {
                            app: a.clone(),
                            level: new_slots[a].level,
                            share: new_slots[a].share,
                        })
                        .collect(),
                    page_in,
                    page_out,
                });
            }
            running = candidate;
            slots = new_slots;
        }
        for app in &running {
            let slot = slots[app];
            let row = cfg.app(app)?.profile.level(slot.level)?;
            let fps = cfg.input_fps.min(slot.share / row.latency);
            let m = totals
                .apps
                .entry(app.clone())
                .or_insert_with(|| AppMetrics {
                    app: app.clone(),
                    ..AppMetrics::default()
                });
            m.running_seconds += 1;
            m.frames += fps;
            m.accuracy_frames += fps * row.accuracy;
        }
    }
    if let Some(agent) = agent {
        totals.steps += agent.total_steps;
    }
    Ok(())
}

fn aware_plan(
    agent: &mut ScheduleAgent,
    cfg: &BenchmarkConfig,
    running: &[String],
    alpha: Option<f64>,
) -> Result<BTreeMap<String, Slot>> {
    if running.is_empty() {
        return Ok(BTreeMap::new());
    }
    let tenants = running
        .iter()
        .map(|a| Ok(cfg.app(a)?.tenant(alpha)))
        .collect::<Result<Vec<Tenant>>>()?;
    let plan = agent.schedule(&tenants, false)?;
    Ok(plan
        .assignments
        .into_iter()
        .map(|a| {
            (
                a.app,
                Slot {
                    level: a.level,
                    share: a.share,
                },
            )
        })
        .collect())
}

fn baseline_plan(cfg: &BenchmarkConfig, running: &[String]) -> Result<BTreeMap<String, Slot>> {
    let mut required = 0;
    for a in running {
        let app = cfg.app(a)?;
        required += app.profile.level(app.knee_level)?.memory;
    }
    if required > cfg.scheduler.memory_budget {
        return Err(Error::ResourceInfeasible {
            apps: running.to_vec(),
            required,
            budget: cfg.scheduler.memory_budget,
        });
    }
    let share = 1.0 / running.len().max(1) as f64;
    running
        .iter()
        .map(|a| {
            Ok((
                a.clone(),
                Slot {
                    level: cfg.app(a)?.knee_level,
                    share,
                },
            ))
        })
        .collect()
}

/// Adds the bytes paged when moving from `old` to `new` and returns the
/// nested (page_in, page_out) for this event.
fn account_paging(
    cfg: &BenchmarkConfig,
    old: &BTreeMap<String, Slot>,
    new: &BTreeMap<String, Slot>,
    totals: &mut Totals,
) -> Result<(u64, u64)> {
    let (mut page_in, mut page_out) = (0, 0);
    let (mut ind_in, mut ind_out) = (0, 0);
    for (app, slot) in new {
        let sizes = cfg.app(app)?.level_sizes();
        let to = sizes[slot.level - 1];
        match old.get(app) {
            Some(prev) if prev.level == slot.level => {}
            Some(prev) => {
                let d = switch_delta_from_sizes(&sizes, prev.level, slot.level)?;
                page_in += d.page_in;
                page_out += d.page_out;
                ind_in += to;
                ind_out += sizes[prev.level - 1];
            }
            None => {
                page_in += to;
                ind_in += to;
            }
        }
    }
    for (app, prev) in old {
        if !new.contains_key(app) {
            let size = cfg.app(app)?.level_sizes()[prev.level - 1];
            page_out += size;
            ind_out += size;
        }
    }
    totals.page_in += page_in;
    totals.page_out += page_out;
    totals.independent_page_in += ind_in;
    totals.independent_page_out += ind_out;
    Ok((page_in, page_out))
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_app_config;
    use super::super::trace::{TraceEvent, TRACE_SCHEMA_VERSION};
    use super::*;

    fn ev(t: u64, kind: EventKind, app: &str) -> TraceEvent {
        TraceEvent {
            t,
            kind,
            app: app.into(),
        }
    }

    fn three_events() -> BenchmarkTrace {
        BenchmarkTrace {
            schema_version: TRACE_SCHEMA_VERSION,
            apps: vec!["a".into(), "b".into()],
            duration: 4,
            min_concurrency: 1,
            max_concurrency: 2,
            seed: 0,
            events: vec![
                ev(0, EventKind::Create, "a"),
                ev(1, EventKind::Create, "b"),
                ev(3, EventKind::Kill, "a"),
            ],
        }
    }

    fn aware(alpha: Option<f64>) -> Scheme {
        Scheme::ResourceAware {
            objective: Objective::MinTotalCost,
            caching: false,
            alpha,
        }
    }

    #[test]
    fn baseline_matches_hand_stepped_table() {
        let cfg = two_app_config();
        let m = simulate_baseline(&three_events(), &cfg, true).unwrap();
        // a: 25 fps alone, then 12.5 at half share; b: 25 at half share, then capped at 30.
        let a = m.app("a").unwrap();
        let b = m.app("b").unwrap();
        assert_eq!((a.running_seconds, a.frames), (3, 50.0));
        assert_eq!((b.running_seconds, b.frames), (3, 80.0));
        assert!((a.accuracy - 0.8).abs() < 1e-12 && (b.accuracy - 0.5).abs() < 1e-12);
        assert!((m.accuracy - 0.65).abs() < 1e-12);
        assert!((m.frame_rate - 130.0 / 6.0).abs() < 1e-12);
        assert_eq!((m.page_in, m.page_out), (200, 160));
        assert_eq!(m.scheduler_invocations, 3);
        assert_eq!(m.events.len(), 3);
        let c = compare(&m, &m);
        assert_eq!((c.accuracy_gain, c.speedup), (0.0, 1.0));
    }

    #[test]
    fn single_app_gets_the_whole_processor() {
        let mut cfg = two_app_config();
        cfg.duration = 1;
        let trace = BenchmarkTrace {
            duration: 1,
            events: vec![ev(0, EventKind::Create, "a")],
            ..three_events()
        };
        let m = simulate(&trace, &cfg, aware(None), true).unwrap();
        assert_eq!(m.events[0].plan[0].share, 1.0);
        assert_eq!(m.events[0].plan[0].level, 2);
        assert_eq!(m.app("a").unwrap().frames, 25.0);
        // The knee is the cost-optimal level here, so both schemes agree.
        let b = simulate_baseline(&trace, &cfg, false).unwrap();
        assert_eq!(b.apps, m.apps);
    }

    #[test]
    fn nested_paging_never_exceeds_independent() {
        let cfg = two_app_config();
        for alpha in [0.0, 0.3, 1.0] {
            let m = simulate(&three_events(), &cfg, aware(Some(alpha)), true).unwrap();
            assert_eq!(m.scheduler_invocations, 3);
            assert!(m.paged_bytes() <= m.independent_paged_bytes());
            for e in &m.events {
                if e.kind == EventKind::Create {
                    assert!(e.page_in > 0);
                }
            }
        }
    }

    #[test]
    fn infeasible_create_is_rejected() {
        let mut cfg = two_app_config();
        cfg.scheduler.memory_budget = 150;
        let m = simulate(&three_events(), &cfg, aware(None), true).unwrap();
        assert_eq!(m.rejected_creates, 1);
        assert!(m.events[1].rejected);
        // Killing the only app is still a change of the running set.
        assert_eq!(m.scheduler_invocations, 2);
        let b = simulate_baseline(&three_events(), &cfg, false).unwrap();
        assert_eq!(b.rejected_creates, 1);
    }

    #[test]
    fn metrics_round_trip() {
        let m = simulate(&three_events(), &two_app_config(), aware(Some(0.2)), true).unwrap();
        assert_eq!(SimMetrics::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
