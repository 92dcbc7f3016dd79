//! CSV summaries and JSON-lines traces.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use pbeegees_core::sim::Trace;
use serde::Serialize;

use crate::experiment::ExperimentResult;
use crate::metrics::MetricsSummary;

pub const CSV_HEADER: [&str; 11] = [
    "protocol",
    "n",
    "f",
    "stop_prob",
    "pd",
    "seed",
    "mean_latency_ms",
    "median_latency_ms",
    "p95_latency_ms",
    "throughput_bps",
    "view_changes",
];

/// Seed column value of the aggregate row.
pub const AGGREGATE_SEED: &str = "agg";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub stop_prob: f64,
    pub pd: u32,
    pub seed: String,
    pub mean_latency_ms: f64,
    pub median_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub throughput_bps: f64,
    pub view_changes: f64,
}

impl CsvRow {
    fn new(result: &ExperimentResult, seed: String, m: &MetricsSummary) -> Self {
        let cfg = &result.config;
        CsvRow {
            protocol: cfg.protocol.name().to_string(),
            n: cfg.n,
            f: cfg.f(),
            stop_prob: cfg.stop_prob,
            pd: cfg.pd,
            seed,
            mean_latency_ms: m.mean_latency_ms,
            median_latency_ms: m.median_latency_ms,
            p95_latency_ms: m.p95_latency_ms,
            throughput_bps: m.throughput_bps,
            view_changes: m.view_changes,
        }
    }
}

/// One row per run followed by the aggregate row.
pub fn csv_rows(result: &ExperimentResult) -> Vec<CsvRow> {
    let mut rows: Vec<CsvRow> = result
        .runs
        .iter()
        .map(|r| CsvRow::new(result, r.seed.to_string(), &r.metrics))
        .collect();
    rows.push(CsvRow::new(result, AGGREGATE_SEED.to_string(), &result.aggregate));
    rows
}

/// Writes the header and `rows`. An empty slice yields a header-only file.
pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON object per trace event, one event per line.
pub fn write_trace_jsonl<W: Write>(out: W, trace: &Trace) -> io::Result<()> {
    let mut w = BufWriter::new(out);
    for event in &trace.events {
        serde_json::to_writer(&mut w, event)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `summary.csv` and one trace file per run into `dir`; returns the
/// CSV path.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("summary.csv");
    write_csv(File::create(&csv_path)?, &csv_rows(result))?;
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    for run in &result.runs {
        let name = format!("{}_n{}_seed{}.jsonl", result.config.protocol.name(), result.config.n, run.seed);
        write_trace_jsonl(File::create(traces.join(name))?, &run.trace)?;
    }
    Ok(csv_path)
}
