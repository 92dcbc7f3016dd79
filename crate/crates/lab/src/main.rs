use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pbeegees_core::replica::Protocol;
use pbeegees_lab::config::parse_protocol;
use pbeegees_lab::output::{csv_rows, write_csv, write_experiment};
use pbeegees_lab::{run_experiment, run_scenario, ExperimentConfig, Overrides, Scenario, ScenarioParams};

#[derive(Parser)]
#[command(name = "pbeegees", version, about = "Simulated BFT consensus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded repetitions of one configuration and emit a CSV summary.
    Run(RunArgs),
    /// Run a scripted adversarial scenario and report its property checks.
    Scenario(ScenarioArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with experiment settings; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<Protocol>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    stop_prob: Option<f64>,
    #[arg(long)]
    pd: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    views: Option<u64>,
    /// Global stabilization time in ms.
    #[arg(long)]
    gst: Option<u64>,
    /// Post-GST delivery bound in ms.
    #[arg(long)]
    delta: Option<u64>,
    #[arg(long)]
    mean_latency: Option<u64>,
    #[arg(long)]
    spike_prob: Option<f64>,
    #[arg(long)]
    spike_ms: Option<u64>,
    /// Include every send and delivery in the trace files.
    #[arg(long)]
    record_messages: bool,
    /// Directory for summary.csv and traces/; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    name: String,
    #[arg(long, value_parser = parse_protocol, default_value = "pbg")]
    protocol: Protocol,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    pd: u32,
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => report(run(args)),
        Command::Scenario(args) => match scenario(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => report(Err(e)),
        },
    }
}

fn report(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        protocol: args.protocol,
        n: args.n,
        stop_prob: args.stop_prob,
        pd: args.pd,
        seed: args.seed,
        reps: args.reps,
        views: args.views,
        gst_ms: args.gst,
        delta_ms: args.delta,
        mean_latency_ms: args.mean_latency,
        spike_prob: args.spike_prob,
        spike_ms: args.spike_ms,
        record_messages: args.record_messages.then_some(true),
    });
    let result = run_experiment(&cfg)?;
    match &args.out {
        Some(dir) => {
            let path = write_experiment(dir, &result)
                .with_context(|| format!("writing results to {}", dir.display()))?;
            let agg = &result.aggregate;
            println!(
                "{} n={} stop_prob={} runs={}: mean {:.0} ms, p95 {:.0} ms, {:.3} blocks/s -> {}",
                cfg.protocol,
                cfg.n,
                cfg.stop_prob,
                agg.runs,
                agg.mean_latency_ms,
                agg.p95_latency_ms,
                agg.throughput_bps,
                path.display()
            );
        }
        None => write_csv(std::io::stdout().lock(), &csv_rows(&result))?,
    }
    Ok(())
}

fn scenario(args: ScenarioArgs) -> anyhow::Result<bool> {
    let scenario: Scenario = args.name.parse()?;
    let params = ScenarioParams {
        protocol: args.protocol,
        seed: args.seed,
        pd: args.pd,
    };
    let report = run_scenario(scenario, &params)?;
    print!("{report}");
    let safety = report.check("safety").is_some_and(|c| c.upheld);
    println!("safety {}", if safety { "upheld" } else { "violated" });
    Ok(report.upheld())
}
