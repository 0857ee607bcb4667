//! `clnc-sim`: run seeded completion-time sweeps from a TOML scenario.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use d2d_clnc::harness::{self, emit_report, load_config, Execution, OutputFormat};
use d2d_clnc::ScenarioConfig;

#[derive(Debug, Parser)]
#[command(name = "clnc-sim", version, about = "Completion-time simulator for cooperative D2D network coding")]
struct Args {
    /// Scenario file (TOML). Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheme to run; repeat for several.
    #[arg(long = "scheme")]
    schemes: Vec<String>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    files: Option<usize>,
    /// Bits per file.
    #[arg(long)]
    file_size: Option<f64>,
    #[arg(long)]
    demand_ratio: Option<f64>,
    /// bits/s/Hz; repeat for several.
    #[arg(long = "rate-threshold")]
    rate_thresholds: Vec<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Per-slot JSON-lines trace destination.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the first slot's conflict graph of the first realization as JSON.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    workers: Option<usize>,
}

fn build_config(args: &Args) -> Result<ScenarioConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    if !args.schemes.is_empty() {
        cfg.schemes = args.schemes.clone();
    }
    if let Some(v) = args.users {
        cfg.users = v;
    }
    if let Some(v) = args.files {
        cfg.files = v;
    }
    if let Some(v) = args.file_size {
        cfg.file_size = v;
    }
    if args.demand_ratio.is_some() {
        cfg.demand_ratio = args.demand_ratio;
    }
    if !args.rate_thresholds.is_empty() {
        cfg.rate_thresholds = args.rate_thresholds.clone();
    }
    if let Some(v) = args.realizations {
        cfg.realizations = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn execution(workers: Option<usize>) -> Execution {
    match workers {
        Some(1) => Execution::Sequential,
        #[cfg(feature = "parallel")]
        Some(w) => Execution::Parallel(Some(w)),
        #[cfg(not(feature = "parallel"))]
        Some(_) => Execution::Sequential,
        None => Execution::Auto,
    }
}

fn run(args: &Args) -> Result<ExitCode, (u8, String)> {
    let config_err = |m: String| (1u8, m);
    let cfg = build_config(args).map_err(config_err)?;
    let format: OutputFormat = args.format.parse().map_err(config_err)?;

    if let Some(path) = &args.dump_graph {
        let graph = harness::first_slot_graph(&cfg, 400).map_err(|e| (1, e.to_string()))?;
        let text = serde_json::to_string_pretty(&graph).expect("graph serializes");
        std::fs::write(path, text).map_err(|e| (1, format!("{}: {e}", path.display())))?;
    }

    let mut trace = match &args.trace {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| (1, format!("{}: {e}", p.display())))?)),
        None => None,
    };
    let mut trace_err: Option<std::io::Error> = None;
    let report = {
        let mut observe = |point: usize, scheme: &str, realization: usize, res: &d2d_clnc::RunResult| {
            let Some(w) = trace.as_mut() else { return };
            let seed = harness::realization_seed(cfg.seed, point, realization);
            for rec in &res.trace {
                let line = serde_json::json!({
                    "point": point,
                    "scheme": scheme,
                    "realization": realization,
                    "seed": seed,
                    "slot": rec.slot,
                    "transmissions": rec.transmissions,
                    "rate": rec.rate,
                    "powers": rec.powers,
                    "duration": rec.duration,
                    "sum_capacity": rec.sum_capacity,
                    "decoded": rec.decoded,
                    "remaining_demand": rec.remaining_demand,
                });
                if let Err(e) = writeln!(w, "{line}") {
                    trace_err.get_or_insert(e);
                }
            }
        };
        let observer: Option<&mut harness::RunObserver<'_>> = if args.trace.is_some() { Some(&mut observe) } else { None };
        harness::run_sweep_observed(&cfg, execution(args.workers), observer).map_err(|e| (1, e.to_string()))?
    };
    if let Some(mut w) = trace {
        if let Some(e) = trace_err.or_else(|| w.flush().err()) {
            return Err((1, format!("trace: {e}")));
        }
    }
    emit_report(&report, format, args.out.as_deref()).map_err(|e| (1, e.to_string()))?;

    let stalls = report.total_stalls();
    if stalls > cfg.max_stalls {
        eprintln!("{stalls} realization(s) stalled (limit {})", cfg.max_stalls);
        for p in &report.points {
            for s in p.samples.iter().filter(|s| s.error.is_some()) {
                eprintln!("  {} @ {}={}: realization {} (seed {}): {}", p.scheme, p.sweep_variable, p.sweep_value, s.realization, s.seed, s.error.as_deref().unwrap_or(""));
            }
        }
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
