//! Per-run and aggregate metrics computed from traces.

use pbeegees_core::sim::Trace;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub runs: usize,
    /// Distinct blocks committed by at least one correct replica.
    pub committed: usize,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p95_latency_ms: f64,
    /// Committed blocks per simulated second.
    pub throughput_bps: f64,
    /// Timeout certificates per run.
    pub view_changes: f64,
    /// Validation frames per correct replica per committed block.
    pub validated_per_commit: f64,
    pub simulated_ms: u64,
}

/// Raw material for a summary; pooled across runs for the aggregate.
#[derive(Clone, Debug, Default)]
pub struct Sample {
    pub latencies: Vec<u64>,
    pub committed: usize,
    pub simulated_ms: u64,
    pub view_changes: usize,
    pub frames_per_replica: f64,
    pub runs: usize,
}

impl Sample {
    pub fn from_trace(trace: &Trace) -> Self {
        let latencies = trace.commit_latencies().into_iter().map(|(_, l)| l).collect();
        let frames: u64 = trace
            .correct
            .iter()
            .filter_map(|r| trace.validation.get(r.index()))
            .map(|s| s.frames)
            .sum();
        Sample {
            latencies,
            committed: trace.first_commits().len(),
            simulated_ms: trace.end_time,
            view_changes: trace.view_changes(),
            frames_per_replica: frames as f64 / trace.correct.len().max(1) as f64,
            runs: 1,
        }
    }

    pub fn merge(&mut self, other: &Sample) {
        self.latencies.extend_from_slice(&other.latencies);
        self.committed += other.committed;
        self.simulated_ms += other.simulated_ms;
        self.view_changes += other.view_changes;
        self.frames_per_replica += other.frames_per_replica;
        self.runs += other.runs;
    }

    pub fn summarize(&self) -> MetricsSummary {
        let mut sorted = self.latencies.clone();
        sorted.sort_unstable();
        let runs = self.runs.max(1) as f64;
        MetricsSummary {
            runs: self.runs,
            committed: self.committed,
            mean_latency_ms: mean(&sorted),
            median_latency_ms: median(&sorted),
            p95_latency_ms: percentile(&sorted, 0.95),
            throughput_bps: if self.simulated_ms == 0 {
                0.0
            } else {
                self.committed as f64 * 1000.0 / self.simulated_ms as f64
            },
            view_changes: self.view_changes as f64 / runs,
            validated_per_commit: if self.committed == 0 {
                0.0
            } else {
                self.frames_per_replica / self.committed as f64
            },
            simulated_ms: self.simulated_ms,
        }
    }
}

pub fn summarize(trace: &Trace) -> MetricsSummary {
    Sample::from_trace(trace).summarize()
}

fn mean(xs: &[u64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().map(|&x| x as f64).sum::<f64>() / xs.len() as f64
}

/// Median of sorted values; the midpoint of the two middle values when even.
fn median(sorted: &[u64]) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
    }
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[u64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1] as f64
}
