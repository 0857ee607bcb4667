//! Seeded Monte Carlo sweeps over scenarios and schemes.

mod config;
mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{generate_topology, ChannelRealization, FadingMode};
use crate::scheduler::{initial_conflict_graph, run_schedule, NetworkState, RunResult, ScheduleError, SchedulerKind};
use crate::state::{init_side_information, Frame};

pub use config::{load_config, ScenarioConfig, SweepConfig, SweepVariable};
pub use report::{emit_report, AggregateReport, OutputFormat, PointSummary, CI_METHOD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("realization setup failed: {0}")]
    Setup(String),
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed of `master` along a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

/// Stable 64-bit FNV-1a hash of a lane label.
pub fn lane_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// A scheme plus the rate threshold it runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeVariant {
    pub kind: SchedulerKind,
    pub rate_threshold: f64,
    pub label: String,
}

/// Expands the configured schemes over the configured rate thresholds.
/// Schemes that ignore the threshold appear once.
pub fn scheme_variants(cfg: &ScenarioConfig) -> Vec<SchemeVariant> {
    let mut out = Vec::new();
    for kind in cfg.kinds() {
        if kind.uses_rate_threshold() && cfg.rate_thresholds.len() > 1 {
            for &r in &cfg.rate_thresholds {
                out.push(SchemeVariant { kind, rate_threshold: r, label: format!("{}@{r}", kind.name()) });
            }
        } else {
            out.push(SchemeVariant { kind, rate_threshold: cfg.rate_thresholds[0], label: kind.name().to_string() });
        }
    }
    out
}

/// One realization's channel and initial state; every scheme starts here.
pub fn realize(cfg: &ScenarioConfig, seed: u64) -> Result<(NetworkState, ChannelRealization), HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let setup = |e: &dyn std::fmt::Display| HarnessError::Setup(e.to_string());
    let topo = generate_topology(cfg.users, cfg.cell_radius, &mut rng).map_err(|e| setup(&e))?;
    let fading = if cfg.fading_per_slot {
        FadingMode::PerSlot { seed: derive_seed(seed, &[lane_id("fading")]) }
    } else {
        FadingMode::Static
    };
    let channel = ChannelRealization::sample(&topo, cfg.shadowing_db, fading, cfg.radio(), &mut rng);
    let frame = if cfg.payloads {
        Frame::with_random_payloads(cfg.files, cfg.file_size, &mut rng)
    } else {
        Frame::new(cfg.files, cfg.file_size)
    }
    .map_err(|e| setup(&e))?;
    let side = init_side_information(&frame, cfg.users, cfg.placement(), &mut rng).map_err(|e| setup(&e))?;
    Ok((NetworkState::new(frame, side, &channel), channel))
}

/// JSON dump of the first slot's conflict graph in the first realization
/// of the first sweep point; edges only up to `max_edge_vertices` vertices.
pub fn first_slot_graph(cfg: &ScenarioConfig, max_edge_vertices: usize) -> Result<serde_json::Value, HarnessError> {
    let (_, _, point) = cfg.points().swap_remove(0);
    let (state, channel) = realize(&point, realization_seed(point.seed, 0, 0))?;
    let sched = point.scheduler(point.rate_thresholds[0]);
    let graph = initial_conflict_graph(&state, &channel.slot_gains(0), channel.radio(), &sched)
        .map_err(|e| HarnessError::Setup(e.to_string()))?;
    Ok(graph.to_json(max_edge_vertices))
}

/// Seed of realization `r` at sweep point `point`.
pub fn realization_seed(master: u64, point: usize, r: usize) -> u64 {
    derive_seed(master, &[point as u64, r as u64])
}

/// Runs one scheme variant on a prepared realization with its own RNG lane.
pub fn run_variant(
    cfg: &ScenarioConfig,
    variant: &SchemeVariant,
    state: &NetworkState,
    channel: &ChannelRealization,
    realization_seed: u64,
) -> Result<RunResult, ScheduleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(realization_seed, &[lane_id(&variant.label)]));
    run_schedule(state, channel, variant.kind, &cfg.scheduler(variant.rate_threshold), &mut rng)
}

/// How realizations are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon pool; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel(Option<usize>),
    #[default]
    Auto,
}

/// Per-realization outcome of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub realization: usize,
    pub seed: u64,
    /// `None` when the run stalled.
    pub completion_time: Option<f64>,
    pub slots: usize,
    pub transmitters_per_slot: f64,
    pub error: Option<String>,
}

/// Everything one realization produced, across variants.
#[derive(Debug, Clone)]
pub struct RealizationOutcome {
    pub seed: u64,
    pub runs: Vec<Result<RunResult, String>>,
}

/// Runs every variant on realization `r` of the point `point`.
pub fn run_realization(cfg: &ScenarioConfig, variants: &[SchemeVariant], point: usize, r: usize) -> RealizationOutcome {
    let seed = realization_seed(cfg.seed, point, r);
    match realize(cfg, seed) {
        Ok((state, channel)) => RealizationOutcome {
            seed,
            runs: variants
                .iter()
                .map(|v| run_variant(cfg, v, &state, &channel, seed).map_err(|e| e.to_string()))
                .collect(),
        },
        Err(e) => RealizationOutcome { seed, runs: variants.iter().map(|_| Err(e.to_string())).collect() },
    }
}

fn map_realizations<T: Send>(count: usize, exec: Execution, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    match exec {
        Execution::Sequential => (0..count).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel(workers) => {
            use rayon::prelude::*;
            match workers {
                Some(w) => rayon::ThreadPoolBuilder::new()
                    .num_threads(w)
                    .build()
                    .expect("thread pool")
                    .install(|| (0..count).into_par_iter().map(&f).collect()),
                None => (0..count).into_par_iter().map(f).collect(),
            }
        }
        Execution::Auto => {
            #[cfg(feature = "parallel")]
            {
                map_realizations(count, Execution::Parallel(None), f)
            }
            #[cfg(not(feature = "parallel"))]
            {
                map_realizations(count, Execution::Sequential, f)
            }
        }
    }
}

/// Callback receiving `(point, variant label, realization, result)` for
/// every finished run, in deterministic order.
pub type RunObserver<'a> = dyn FnMut(usize, &str, usize, &RunResult) + 'a;

/// Runs the whole sweep and aggregates it.
pub fn run_sweep(cfg: &ScenarioConfig, exec: Execution) -> Result<AggregateReport, HarnessError> {
    run_sweep_observed(cfg, exec, None)
}

/// [`run_sweep`] with an optional per-run observer, e.g. for trace output.
pub fn run_sweep_observed(cfg: &ScenarioConfig, exec: Execution, mut observer: Option<&mut RunObserver<'_>>) -> Result<AggregateReport, HarnessError> {
    cfg.validate()?;
    let mut points = Vec::new();
    for (p, (variable, value, point_cfg)) in cfg.points().into_iter().enumerate() {
        let variants = scheme_variants(&point_cfg);
        let outcomes = map_realizations(point_cfg.realizations, exec, |r| run_realization(&point_cfg, &variants, p, r));
        for (vi, v) in variants.iter().enumerate() {
            let samples: Vec<Sample> = outcomes
                .iter()
                .enumerate()
                .map(|(r, o)| match &o.runs[vi] {
                    Ok(res) => {
                        if let Some(obs) = observer.as_deref_mut() {
                            obs(p, &v.label, r, res);
                        }
                        Sample {
                            realization: r,
                            seed: o.seed,
                            completion_time: Some(res.overall),
                            slots: res.slots,
                            transmitters_per_slot: res.mean_transmitters_per_slot(),
                            error: None,
                        }
                    }
                    Err(e) => Sample {
                        realization: r,
                        seed: o.seed,
                        completion_time: None,
                        slots: 0,
                        transmitters_per_slot: 0.0,
                        error: Some(e.clone()),
                    },
                })
                .collect();
            points.push(PointSummary::from_samples(&variable, value, &v.label, samples));
        }
    }
    Ok(AggregateReport { ci_method: CI_METHOD.to_string(), points })
}
