//! Repeated seeded runs of one configuration.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use pbeegees_core::sim::{self, SimConfig, Trace};
use pbeegees_core::SimError;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::metrics::{MetricsSummary, Sample};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run with seed {seed} failed: {source}")]
    Run { seed: u64, source: SimError },
}

#[derive(Debug)]
pub struct RunResult {
    pub seed: u64,
    pub trace: Trace,
    pub metrics: MetricsSummary,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    pub aggregate: MetricsSummary,
}

/// Runs every repetition of `cfg`, in parallel across isolated simulations.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ExperimentError> {
    cfg.validate()?;
    let sims: Vec<SimConfig> = cfg
        .seeds()
        .map(|seed| cfg.sim_config(seed))
        .collect::<Result<_, _>>()?;
    let traces = run_all(&sims)?;
    let mut pooled = Sample::default();
    let runs = traces
        .into_iter()
        .map(|trace| {
            let sample = Sample::from_trace(&trace);
            pooled.merge(&sample);
            RunResult {
                seed: trace.seed,
                metrics: sample.summarize(),
                trace,
            }
        })
        .collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        runs,
        aggregate: pooled.summarize(),
    })
}

/// Runs each config on a worker pool and returns traces in input order,
/// failing on the first run that errors.
pub fn run_all(sims: &[SimConfig]) -> Result<Vec<Trace>, ExperimentError> {
    run_each(sims)
        .into_iter()
        .zip(sims)
        .map(|(out, cfg)| {
            out.map_err(|source| ExperimentError::Run {
                seed: cfg.seed,
                source,
            })
        })
        .collect()
}

/// Runs each config on a worker pool; one result per config, in input order.
pub fn run_each(sims: &[SimConfig]) -> Vec<Result<Trace, SimError>> {
    let workers = thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(sims.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Trace, SimError>>>> =
        Mutex::new((0..sims.len()).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = sims.get(i) else { break };
                let out = sim::run(cfg);
                slots.lock().unwrap()[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|slot| slot.expect("every slot is filled"))
        .collect()
}
