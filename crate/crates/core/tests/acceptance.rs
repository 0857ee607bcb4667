//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only turn into a nonzero exit status with
//! `ACCEPTANCE_STRICT=1`, so the numbers are always printed in full.

mod common;

use std::time::{Duration, Instant};

use common::{check_greedy_is, check_run, paired_ci, placeable, realization, rng, small_config, RunStatus, TinyInstance};
use d2d_clnc::example;
use d2d_clnc::harness::{run_sweep, Execution, SweepConfig, SweepVariable};
use d2d_clnc::mwis::{exact_mwis, greedy_mwis};
use d2d_clnc::power::{allocate_power, sum_capacity, PowerConfig, ScheduleContext};
use d2d_clnc::scheduler::{apply_decision, clnc_slot, initial_conflict_graph, ra_idnc_single_slot, validate_decision};
use d2d_clnc::{harness, run_schedule, ScenarioConfig, SchedulerConfig, SchedulerKind};
use rand::seq::SliceRandom;
use rand::Rng;

/// Smallest greedy/exact weight ratio over the seeded conflict graphs below,
/// measured when the suite was first run.
const MWIS_RATIO_FLOOR: f64 = 2.6e-4;
/// Mean CLNC / optimum completion-time ratio over the seeded tiny set,
/// measured when the suite was first run; regressions beyond 1% fail.
const TINY_RATIO_BASELINE: f64 = 1.075589;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn worked_example() -> Outcome {
    let start = Instant::now();
    let mut s = example::state();
    let ch = example::channel();
    for d in example::hand_decisions(&s.clone()) {
        if let Err(e) = validate_decision(SchedulerKind::Clnc, &s, &d, ch.initial_gains(), ch.radio(), 0.5) {
            return outcome(false, format!("hand schedule infeasible: {e}"));
        }
        apply_decision(SchedulerKind::Clnc, &mut s, &d).expect("valid decision");
    }
    let replay = s.ledger.elapsed();
    let clnc = run_schedule(&example::state(), &ch, SchedulerKind::Clnc, &SchedulerConfig::default(), &mut rng(0));
    let elapsed = start.elapsed();
    let target = 22.0 / 3.0;
    let replay_ok = s.side.all_satisfied() && (replay - target).abs() <= 8.0 * f64::EPSILON * target;
    let (clnc_t, clnc_ok) = match &clnc {
        Ok(r) => (r.overall, r.overall <= target + 1e-12),
        Err(_) => (f64::NAN, false),
    };
    outcome(
        replay_ok && clnc_ok && elapsed < Duration::from_secs(1),
        format!("replay {replay:.6} s, clnc {clnc_t:.6} s (target <= {target:.6}), {elapsed:.2?}"),
    )
}

fn is_feasibility() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut violations = Vec::new();
    for case in 0..10_000 {
        let cfg = placeable(&mut r, 2..=12, 1..=10, |c, r| {
            c.cell_radius = [100.0, 500.0][r.random_range(0..2)];
            c.rate_thresholds = vec![[0.0, 0.5, 1.5][r.random_range(0..3)]];
            if r.random_bool(0.3) {
                c.rate_ladder = Some(vec![0.5, 1.0, 2.0, 3.0]);
            }
        });
        if let Err(e) = check_greedy_is(&cfg, cfg.seed) {
            violations.push(format!("case {case}: {e}"));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations.is_empty() && elapsed < Duration::from_secs(60),
        format!("{} violations in 10000 states, {elapsed:.2?} {}", violations.len(), violations.first().map_or("", String::as_str)),
    )
}

fn mwis_gap() -> Outcome {
    let mut r = rng(3);
    let (mut min_ratio, mut sum_ratio) = (f64::INFINITY, 0.0);
    let (mut graphs, mut exceptions) = (0, 0);
    while graphs < 1000 {
        let cfg = placeable(&mut r, 2..=6, 1..=5, |c, r| {
            c.cell_radius = [100.0, 500.0][r.random_range(0..2)];
            if r.random_bool(0.5) {
                c.rate_ladder = Some(vec![0.5, 1.0, 2.0, 4.0]);
            }
        });
        let (state, ch) = harness::realize(&cfg, cfg.seed).expect("valid realization");
        let g = initial_conflict_graph(&state, &ch.slot_gains(0), ch.radio(), &cfg.scheduler(0.5)).expect("graph");
        if g.is_empty() || g.len() > 14 {
            continue;
        }
        graphs += 1;
        let greedy = greedy_mwis(&g).weight;
        let exact = exact_mwis(&g, 14).expect("within cap").weight;
        if exact < greedy - 1e-9 * exact {
            exceptions += 1;
        }
        min_ratio = min_ratio.min(greedy / exact);
        sum_ratio += greedy / exact;
    }
    outcome(
        exceptions == 0 && min_ratio >= MWIS_RATIO_FLOOR,
        format!(
            "greedy/exact over {graphs} conflict graphs: min {min_ratio:.6} (floor {MWIS_RATIO_FLOOR}), mean {:.4}; {exceptions} cases with exact < greedy",
            sum_ratio / graphs as f64
        ),
    )
}

fn power_fixed_point() -> Outcome {
    let mut r = rng(4);
    let cfg = ScenarioConfig { users: 12, files: 4, ..ScenarioConfig::default() };
    let (mut small_residual, mut total, mut two_tx, mut near_grid) = (0, 0, 0, 0);
    let mut worst = Vec::new();
    for c in 0..500 {
        let (_, ch) = realization(&cfg, c);
        let gains = ch.initial_gains();
        let radio = ch.radio();
        let mut devices: Vec<usize> = (0..cfg.users).collect();
        devices.shuffle(&mut r);
        let k = r.random_range(2..=4);
        let tx = devices[..k].to_vec();
        let mut rest = devices[k..].iter().copied();
        let targets: Vec<Vec<usize>> = (0..k).map(|_| (&mut rest).take(r.random_range(1..=2)).collect()).collect();
        let ctx = ScheduleContext::new(tx, targets, gains, radio.noise_power_w, radio.max_power_w, PowerConfig::default()).expect("valid context");
        let alloc = allocate_power(&ctx);
        total += 1;
        if alloc.iterations <= 100 && alloc.residual < 1e-6 * radio.max_power_w {
            small_residual += 1;
        }
        if k == 2 {
            two_tx += 1;
            let grid = (0..200)
                .flat_map(|a| (0..200).map(move |b| (a, b)))
                .map(|(a, b)| {
                    let q = [radio.max_power_w * a as f64 / 199.0, radio.max_power_w * b as f64 / 199.0];
                    sum_capacity(&ctx, &q)
                })
                .fold(0.0, f64::max);
            let got = alloc.objective();
            if got >= 0.99 * grid {
                near_grid += 1;
            } else {
                worst.push(format!("context {c}: {got:.4} vs grid {grid:.4}"));
            }
        }
    }
    let conv = small_residual as f64 / total as f64;
    let grid = near_grid as f64 / two_tx.max(1) as f64;
    for w in &worst {
        println!("    shortfall {w}");
    }
    outcome(
        conv >= 0.99 && grid >= 0.95,
        format!("residual < 1e-6 Q_max in {:.1}% of {total}; within 1% of grid in {:.1}% of {two_tx} two-transmitter cases", 100.0 * conv, 100.0 * grid),
    )
}

fn sum_capacity_dominance() -> Outcome {
    let cfg = ScenarioConfig { users: 15, files: 15, ..ScenarioConfig::default() };
    let sched = cfg.scheduler(cfg.rate_thresholds[0]);
    let (mut slots, mut worse, mut stalled) = (0, 0, 0);
    for real in 0..200 {
        let (mut state, ch) = realization(&cfg, real);
        let radio = *ch.radio();
        let mut slot = 0;
        while !state.side.all_satisfied() {
            let gains = ch.slot_gains(slot);
            let clnc = clnc_slot(&state, &gains, &radio, &sched).expect("slot");
            let ra = ra_idnc_single_slot(&state, &gains, &radio, &sched).expect("slot");
            let (Some(clnc), Some(ra)) = (clnc, ra) else {
                stalled += 1;
                break;
            };
            slots += 1;
            if clnc.sum_capacity < ra.sum_capacity {
                worse += 1;
            }
            apply_decision(SchedulerKind::Clnc, &mut state, &clnc).expect("valid decision");
            slot += 1;
        }
    }
    outcome(worse == 0 && slots > 0, format!("{worse} of {slots} slots below RA-IDNC ({stalled} realizations stalled)"))
}

const BASELINES: [&str; 3] = ["coop-idnc", "rlnc", "uncoded"];

fn figure_ordering() -> Outcome {
    let start = Instant::now();
    let sweeps = [
        (20, 20, SweepVariable::Users, vec![10.0, 15.0, 20.0]),
        (20, 20, SweepVariable::Files, vec![10.0, 15.0, 20.0]),
        (20, 15, SweepVariable::FileSize, vec![0.5e6, 1.0e6, 2.0e6]),
        (10, 8, SweepVariable::DemandRatio, vec![0.3, 0.5, 0.7]),
    ];
    let mut failures = 0;
    let mut checks = 0;
    for (users, files, variable, values) in sweeps {
        let cfg = ScenarioConfig { users, files, sweep: Some(SweepConfig { variable, values: values.clone() }), ..ScenarioConfig::default() };
        let report = run_sweep(&cfg, Execution::Auto).expect("sweep runs");
        for v in values {
            let times = |s: &str| report.point(s, v).expect("point").values();
            let all: Vec<Vec<Option<f64>>> = ["clnc", "ra-idnc"].into_iter().chain(BASELINES).map(times).collect();
            let paired: Vec<usize> = (0..all[0].len()).filter(|&r| all.iter().all(|t| t[r].is_some())).collect();
            let col = |i: usize| -> Vec<f64> { paired.iter().map(|&r| all[i][r].unwrap()).collect() };
            let mut line = format!("    {}={v} ({} paired):", variable.name(), paired.len());
            let mut compare = |lo: usize, hi: usize, name: &str| {
                let (gap, ci) = paired_ci(&col(hi), &col(lo));
                let ok = gap > ci && gap > 0.0;
                checks += 1;
                if !ok {
                    failures += 1;
                }
                line.push_str(&format!(" {name} {gap:.4}±{ci:.4}{}", if ok { "" } else { "!" }));
            };
            compare(0, 1, "ra-clnc");
            for (b, name) in BASELINES.iter().enumerate() {
                compare(1, 2 + b, &format!("{name}-ra"));
            }
            println!("{line}");
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(600),
        format!("{} of {checks} ordered gaps exceed their paired 95% half-width, {elapsed:.2?}", checks - failures),
    )
}

fn linearity_in_b() -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    for seed in 0..20 {
        let mut cfg = small_config(8, 6, seed);
        cfg.cell_radius = 150.0;
        let mut cfg2 = cfg.clone();
        cfg2.file_size *= 2.0;
        for kind in SchedulerKind::ALL {
            let variant = harness::scheme_variants(&cfg).into_iter().find(|v| v.kind == kind).expect("variant");
            let (s1, c1) = harness::realize(&cfg, seed).unwrap();
            let (s2, c2) = harness::realize(&cfg2, seed).unwrap();
            let (Ok(a), Ok(b)) = (harness::run_variant(&cfg, &variant, &s1, &c1, seed), harness::run_variant(&cfg2, &variant, &s2, &c2, seed)) else {
                continue;
            };
            runs += 1;
            worst = worst.max((b.overall - 2.0 * a.overall).abs() / (2.0 * a.overall));
        }
    }
    outcome(worst < 1e-12 && runs > 0, format!("max relative error {worst:.2e} over {runs} runs"))
}

fn tiny_optimality() -> Outcome {
    let mut r = rng(8);
    let (mut ratios, mut violations, mut skipped) = (Vec::new(), 0, 0);
    while ratios.len() < 100 {
        let inst = TinyInstance::random(&mut r);
        let Some(opt) = inst.optimal_completion(10.0) else {
            skipped += 1;
            continue;
        };
        let Ok(res) = run_schedule(&inst.state(10.0), &inst.channel(), SchedulerKind::Clnc, &inst.scheduler(), &mut rng(0)) else {
            skipped += 1;
            continue;
        };
        if res.overall < opt * (1.0 - 1e-9) {
            violations += 1;
        }
        ratios.push(res.overall / opt);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        violations == 0 && mean <= TINY_RATIO_BASELINE * 1.01,
        format!("mean clnc/optimum {mean:.6} (baseline {TINY_RATIO_BASELINE}), max {max:.4}, {violations} below optimum, {skipped} instances skipped"),
    )
}

fn invariant_sweep() -> Outcome {
    let mut r = rng(9);
    let (mut completed, mut stalled) = (0, 0);
    let mut errors = Vec::new();
    for case in 0..1000 {
        let cfg = common::random_config(&mut r);
        let kind = SchedulerKind::ALL[case % 5];
        match check_run(&cfg, kind, cfg.seed) {
            Ok(RunStatus::Completed) => completed += 1,
            Ok(RunStatus::Stalled) => stalled += 1,
            Err(e) => errors.push(format!("case {case} ({kind}): {e}")),
        }
    }
    outcome(
        errors.is_empty(),
        format!("{completed} completed, {stalled} stalled, {} violations {}", errors.len(), errors.first().map_or("", String::as_str)),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("AC-1 worked example", worked_example),
        ("AC-2 independent-set feasibility", is_feasibility),
        ("AC-3 greedy vs exact MWIS", mwis_gap),
        ("AC-4 power fixed point", power_fixed_point),
        ("AC-5 sum-capacity dominance", sum_capacity_dominance),
        ("AC-6 completion-time ordering", figure_ordering),
        ("AC-7 linearity in file size", linearity_in_b),
        ("AC-8 tiny-instance optimum", tiny_optimality),
        ("AC-9 invariant sweep", invariant_sweep),
    ];
    let only = std::env::args().skip(1).find(|a| a.starts_with("AC-"));
    let mut failed = 0;
    for (name, run) in criteria {
        if only.as_deref().is_some_and(|o| !name.starts_with(o)) {
            continue;
        }
        let o = run();
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{failed} criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
