//! Deadline-aware utility metrics.
//!
//! `qos_budget` and `qos_deploy` are signed: a large budget penalty can push
//! them below zero and they are never clamped. Percentiles use the
//! nearest-rank rule (the `ceil(p·N)`-th smallest sample).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::frame_hits;
use crate::response_map::PatchSelection;
use crate::supervision::TargetSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QosError {
    #[error("no ground-truth targets")]
    NoTargets,
    #[error("latency list is empty")]
    NoFrames,
    #[error("marginal utility needs a budget of at least 1")]
    ZeroBudget,
    #[error("invalid QoS configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosConfig {
    pub lambda: f64,
    /// Deadline in ms; `f64::INFINITY` disables it.
    pub tau_ms: f64,
}

impl Default for QosConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau_ms: 33.3,
        }
    }
}

impl QosConfig {
    pub fn validate(&self) -> Result<(), QosError> {
        if !(self.lambda > 0.0) {
            return Err(QosError::InvalidConfig("lambda must be positive"));
        }
        if !(self.tau_ms > 0.0) {
            return Err(QosError::InvalidConfig("tau must be positive"));
        }
        Ok(())
    }
}

/// `recall − λ·r`.
pub fn qos_budget(recall: f64, ratio: f64, lambda: f64) -> f64 {
    recall - lambda * ratio
}

/// Fraction of all targets that are covered *and* belong to a frame whose
/// end-to-end latency is within `tau_ms`.
pub fn qos_sys<'a, I>(frames: I, tau_ms: f64, half: f64) -> Result<f64, QosError>
where
    I: IntoIterator<Item = (&'a TargetSet, &'a PatchSelection, f64)>,
{
    let (hits, total) = frames
        .into_iter()
        .map(|(t, s, e2e)| {
            let (h, n) = frame_hits(t, s, half);
            (if e2e <= tau_ms { h } else { 0 }, n)
        })
        .fold((0, 0), |(h, n), (fh, fn_)| (h + fh, n + fn_));
    if total == 0 {
        return Err(QosError::NoTargets);
    }
    Ok(hits as f64 / total as f64)
}

/// `qos_sys − λ·r`.
pub fn qos_deploy(qos_sys: f64, ratio: f64, lambda: f64) -> f64 {
    qos_sys - lambda * ratio
}

/// Deadline satisfaction ratio.
pub fn dsr(latencies_ms: &[f64], tau_ms: f64) -> Result<f64, QosError> {
    if latencies_ms.is_empty() {
        return Err(QosError::NoFrames);
    }
    let ok = latencies_ms.iter().filter(|&&t| t <= tau_ms).count();
    Ok(ok as f64 / latencies_ms.len() as f64)
}

/// Nearest-rank percentile of an ascending slice, `pct` in `1..=100`.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub fps: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub jitter_ms: f64,
}

/// Throughput `N / ΣT` and tail jitter `p99 − p50`.
pub fn fps_and_jitter(latencies_ms: &[f64]) -> Result<RuntimeStats, QosError> {
    if latencies_ms.is_empty() {
        return Err(QosError::NoFrames);
    }
    let mut sorted = latencies_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let total_s: f64 = latencies_ms.iter().sum::<f64>() / 1000.0;
    let p50 = nearest_rank(&sorted, 50);
    let p99 = nearest_rank(&sorted, 99);
    Ok(RuntimeStats {
        fps: latencies_ms.len() as f64 / total_s,
        p50_ms: p50,
        p99_ms: p99,
        jitter_ms: p99 - p50,
    })
}

/// `(Recall(K)/K, QoS_sys(K)/K)`.
pub fn marginal_utility(
    recall: f64,
    k: usize,
    qos_sys: Option<f64>,
) -> Result<(f64, Option<f64>), QosError> {
    if k == 0 {
        return Err(QosError::ZeroBudget);
    }
    let k = k as f64;
    Ok((recall / k, qos_sys.map(|q| q / k)))
}

/// Points not strictly dominated by any other point, where lower latency and
/// higher QoS are better. Sorted by latency ascending, then QoS descending.
pub fn pareto_frontier(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut out = Vec::new();
    // Best QoS among points with strictly smaller latency.
    let mut best_before = f64::NEG_INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        let lat = sorted[i].0;
        let group_best = sorted[i].1;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == lat {
            if sorted[j].1 == group_best && group_best > best_before {
                out.push(sorted[j]);
            }
            j += 1;
        }
        best_before = best_before.max(group_best);
        i = j;
    }
    out
}

/// One evaluated operating point. Field names are the serialized names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosReport {
    pub recall: f64,
    pub qos_budget: f64,
    pub qos_sys: f64,
    pub qos_deploy: f64,
    pub dsr: f64,
    pub fps: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub jitter_ms: f64,
    pub eta_k: f64,
    pub eta_k_qos: f64,
}

/// Per-frame inputs for [`qos_report`].
pub struct QosFrame<'a> {
    pub targets: &'a TargetSet,
    pub selection: &'a PatchSelection,
    pub e2e_ms: f64,
}

/// Assembles the full metric family for one method at budget `k`.
/// `ratio` is the (mean) budget ratio the penalty applies to.
pub fn qos_report(
    frames: &[QosFrame<'_>],
    k: usize,
    ratio: f64,
    cfg: &QosConfig,
    half: f64,
) -> Result<QosReport, QosError> {
    cfg.validate()?;
    let recall = qos_sys(
        frames
            .iter()
            .map(|f| (f.targets, f.selection, f64::INFINITY)),
        f64::INFINITY,
        half,
    )?;
    let sys = qos_sys(
        frames.iter().map(|f| (f.targets, f.selection, f.e2e_ms)),
        cfg.tau_ms,
        half,
    )?;
    let latencies: Vec<f64> = frames.iter().map(|f| f.e2e_ms).collect();
    let stats = fps_and_jitter(&latencies)?;
    let (eta_k, eta_k_qos) = marginal_utility(recall, k, Some(sys))?;
    Ok(QosReport {
        recall,
        qos_budget: qos_budget(recall, ratio, cfg.lambda),
        qos_sys: sys,
        qos_deploy: qos_deploy(sys, ratio, cfg.lambda),
        dsr: dsr(&latencies, cfg.tau_ms)?,
        fps: stats.fps,
        p50_ms: stats.p50_ms,
        p99_ms: stats.p99_ms,
        jitter_ms: stats.jitter_ms,
        eta_k,
        eta_k_qos: eta_k_qos.unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_penalty() {
        assert!((qos_budget(0.5, 0.02, 1.0) - 0.48).abs() < 1e-15);
        assert_eq!(qos_budget(0.5, 0.02, 0.0), 0.5);
        assert_eq!(qos_budget(0.0, 0.1, 2.0), -0.2);
        assert!((qos_deploy(0.7, 0.01, 1.0) - 0.69).abs() < 1e-15);
        assert_eq!(qos_deploy(0.7, 0.0, 1.0), 0.7);
    }

    #[test]
    fn dsr_counts() {
        assert_eq!(dsr(&[10.0, 20.0, 30.0, 40.0], 25.0).unwrap(), 0.5);
        assert_eq!(dsr(&[10.0, 20.0], 100.0).unwrap(), 1.0);
        assert_eq!(dsr(&[10.0, 20.0], 5.0).unwrap(), 0.0);
        assert_eq!(dsr(&[], 5.0), Err(QosError::NoFrames));
    }

    #[test]
    fn runtime_stats() {
        let s = fps_and_jitter(&[10.0; 100]).unwrap();
        assert_eq!((s.p50_ms, s.p99_ms, s.jitter_ms), (10.0, 10.0, 0.0));
        assert!((s.fps - 100.0).abs() < 1e-9);
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = fps_and_jitter(&ramp).unwrap();
        assert_eq!((s.p50_ms, s.p99_ms, s.jitter_ms), (50.0, 99.0, 49.0));
        let s = fps_and_jitter(&[25.0]).unwrap();
        assert_eq!((s.fps, s.jitter_ms), (40.0, 0.0));
        assert_eq!(fps_and_jitter(&[]), Err(QosError::NoFrames));
    }

    #[test]
    fn marginal() {
        assert!((marginal_utility(0.9, 9, None).unwrap().0 - 0.1).abs() < 1e-15);
        assert_eq!(marginal_utility(0.9, 9, Some(0.0)).unwrap().1, Some(0.0));
        let small = marginal_utility(0.5, 4, None).unwrap().0;
        let large = marginal_utility(0.6, 9, None).unwrap().0;
        assert_eq!(small, 0.125);
        assert!((large - 0.0666666).abs() < 1e-6);
        assert!(small > large);
        assert_eq!(marginal_utility(0.5, 0, None), Err(QosError::ZeroBudget));
    }

    #[test]
    fn frontier_examples() {
        assert_eq!(pareto_frontier(&[(1.0, 0.5)]), vec![(1.0, 0.5)]);
        assert_eq!(
            pareto_frontier(&[(3.0, 0.78), (6.0, 0.59), (7.0, 0.41)]),
            vec![(3.0, 0.78)]
        );
        assert_eq!(
            pareto_frontier(&[(1.0, 0.2), (2.0, 0.5), (3.0, 0.4)]),
            vec![(1.0, 0.2), (2.0, 0.5)]
        );
        // Duplicates don't dominate each other; same latency with lower QoS is dominated.
        assert_eq!(
            pareto_frontier(&[(1.0, 0.5), (1.0, 0.5), (1.0, 0.3), (2.0, 0.5)]),
            vec![(1.0, 0.5), (1.0, 0.5)]
        );
        assert!(pareto_frontier(&[]).is_empty());
    }
}
