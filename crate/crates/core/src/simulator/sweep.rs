use serde::{Deserialize, Serialize};

use super::engine::{compare, simulate_many, Scheme, SimMetrics};
use super::trace::BenchmarkTrace;
use super::BenchmarkConfig;
use crate::error::{Error, Result};
use crate::scheduler::Objective;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub accuracy: f64,
    pub frame_rate: f64,
    /// Versus the baseline, percentage points.
    pub accuracy_gain: f64,
    pub speedup: f64,
    pub paged_bytes: u64,
    pub independent_paged_bytes: u64,
    /// Weakly better than the baseline in both accuracy and frame rate.
    pub dominates_baseline: bool,
}

/// Rank correlation of the sweep points against alpha.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub accuracy_tau: f64,
    pub frame_rate_tau: f64,
    /// Accuracy falls and frame rate rises with alpha, both in rank
    /// correlation and between the end points.
    pub monotone: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub objective: Objective,
    pub points: Vec<SweepPoint>,
    pub baseline_accuracy: f64,
    pub baseline_frame_rate: f64,
    pub baseline_paged_bytes: u64,
    /// Index into `points` of the best combined trade-off.
    pub knee: usize,
    pub trend: Trend,
}

impl AlphaSweep {
    pub fn dominating(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.dominates_baseline)
    }
}

/// Simulates every trace once per alpha with every application's knob set
/// to that alpha, and once with the baseline.
pub fn sweep_alpha(
    traces: &[BenchmarkTrace],
    cfg: &BenchmarkConfig,
    alphas: &[f64],
    objective: Objective,
    caching: bool,
) -> Result<AlphaSweep> {
    if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidArgument(
            "alpha grid must be non-empty and within [0, 1]".into(),
        ));
    }
    let baseline = simulate_many(traces, cfg, Scheme::Baseline, false)?;
    let points = alphas
        .iter()
        .map(|&alpha| {
            let scheme = Scheme::ResourceAware {
                objective,
                caching,
                alpha: Some(alpha),
            };
            let m = simulate_many(traces, cfg, scheme, false)?;
            Ok(point(alpha, &m, &baseline))
        })
        .collect::<Result<Vec<_>>>()?;
    let knee = select_knee(&points);
    let trend = trend(&points);
    Ok(AlphaSweep {
        objective,
        points,
        baseline_accuracy: baseline.accuracy,
        baseline_frame_rate: baseline.frame_rate,
        baseline_paged_bytes: baseline.paged_bytes(),
        knee,
        trend,
    })
}

fn point(alpha: f64, m: &SimMetrics, baseline: &SimMetrics) -> SweepPoint {
    let c = compare(m, baseline);
    SweepPoint {
        alpha,
        accuracy: m.accuracy,
        frame_rate: m.frame_rate,
        accuracy_gain: c.accuracy_gain,
        speedup: c.speedup,
        paged_bytes: m.paged_bytes(),
        independent_paged_bytes: m.independent_paged_bytes(),
        dominates_baseline: m.accuracy >= baseline.accuracy && m.frame_rate >= baseline.frame_rate,
    }
}

fn normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Point maximizing min-max normalized accuracy plus normalized frame rate;
/// the first such point wins ties.
pub fn select_knee(points: &[SweepPoint]) -> usize {
    let acc = normalize(&points.iter().map(|p| p.accuracy).collect::<Vec<_>>());
    let fps = normalize(&points.iter().map(|p| p.frame_rate).collect::<Vec<_>>());
    let mut best = 0;
    for i in 1..points.len() {
        if acc[i] + fps[i] > acc[best] + fps[best] {
            best = i;
        }
    }
    best
}

/// Kendall rank correlation (tau-a) between `x` and `y`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[j] - x[i]).signum() * ((x[j] != x[i]) as i32 as f64);
            let dy = (y[j] - y[i]).signum() * ((y[j] != y[i]) as i32 as f64);
            s += dx * dy;
        }
    }
    s / (n * (n - 1) / 2) as f64
}

fn trend(points: &[SweepPoint]) -> Trend {
    let alpha: Vec<f64> = points.iter().map(|p| p.alpha).collect();
    let acc: Vec<f64> = points.iter().map(|p| p.accuracy).collect();
    let fps: Vec<f64> = points.iter().map(|p| p.frame_rate).collect();
    let accuracy_tau = kendall_tau(&alpha, &acc);
    let frame_rate_tau = kendall_tau(&alpha, &fps);
    let (first, last) = (points.first(), points.last());
    let ends = match (first, last) {
        (Some(a), Some(b)) if points.len() > 1 => {
            a.accuracy >= b.accuracy && b.frame_rate >= a.frame_rate
        }
        _ => true,
    };
    Trend {
        accuracy_tau,
        frame_rate_tau,
        monotone: points.len() < 2 || (accuracy_tau < 0.0 && frame_rate_tau > 0.0 && ends),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(alpha: f64, accuracy: f64, frame_rate: f64) -> SweepPoint {
        SweepPoint {
            alpha,
            accuracy,
            frame_rate,
            accuracy_gain: 0.0,
            speedup: 1.0,
            paged_bytes: 0,
            independent_paged_bytes: 0,
            dominates_baseline: false,
        }
    }

    #[test]
    fn tau_extremes() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]), -1.0);
        assert_eq!(kendall_tau(&[1.0], &[1.0]), 0.0);
    }

    #[test]
    fn knee_balances_both_axes() {
        let pts = [p(0.0, 0.9, 10.0), p(0.5, 0.85, 25.0), p(1.0, 0.6, 30.0)];
        assert_eq!(select_knee(&pts), 1);
        assert_eq!(select_knee(&pts[..1]), 0);
        let t = trend(&pts);
        assert!(t.monotone);
        assert_eq!((t.accuracy_tau, t.frame_rate_tau), (-1.0, 1.0));
    }
}
