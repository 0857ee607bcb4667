//! Instance generators and independent oracles shared by the integration
//! tests and the acceptance run.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use d2d_clnc::graph::RateMode;
use d2d_clnc::harness::{self, realization_seed};
use d2d_clnc::mwis::{greedy_mwis, IndependenceGraph};
use d2d_clnc::scheduler::{apply_decision, decide, initial_conflict_graph, validate_decision};
use d2d_clnc::{ChannelRealization, FileSet, GainMatrix, NetworkState, RadioParams, ScenarioConfig, SchedulerKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small scenario with every scheme and a single realization.
pub fn small_config(users: usize, files: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig { users, files, realizations: 1, seed, ..ScenarioConfig::default() }
}

/// A config whose realization at its own seed can be set up; sizes are
/// redrawn until the caches can cover the frame.
pub fn placeable(r: &mut ChaCha8Rng, users: std::ops::RangeInclusive<usize>, files: std::ops::RangeInclusive<usize>, tweak: impl Fn(&mut ScenarioConfig, &mut ChaCha8Rng)) -> ScenarioConfig {
    loop {
        let mut c = small_config(r.random_range(users.clone()), r.random_range(files.clone()), r.random());
        tweak(&mut c, r);
        if harness::realize(&c, c.seed).is_ok() {
            return c;
        }
    }
}

/// A randomized small scenario: size, radius, threshold, ladder, fading
/// and payload switches all vary.
pub fn random_config(r: &mut ChaCha8Rng) -> ScenarioConfig {
    placeable(r, 2..=10, 1..=8, |c, r| {
        c.cell_radius = [100.0, 250.0, 500.0][r.random_range(0..3)];
        c.rate_thresholds = vec![[0.0, 0.5, 1.0][r.random_range(0..3)]];
        if r.random_bool(0.25) {
            c.rate_ladder = Some(vec![0.5, 1.0, 2.0, 4.0]);
        }
        c.fading_per_slot = r.random_bool(0.5);
        c.payloads = r.random_bool(0.3);
        if r.random_bool(0.3) {
            c.demand_ratio = Some(r.random_range(0.2..0.8));
        }
        c.slot_cap = 5_000;
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    Stalled,
}

/// Steps `kind` slot by slot, checking every invariant after each slot, and
/// compares the outcome with `run_schedule` under the same seed (twice).
pub fn check_run(cfg: &ScenarioConfig, kind: SchedulerKind, seed: u64) -> Result<RunStatus, String> {
    let (initial, channel) = harness::realize(cfg, seed).map_err(|e| e.to_string())?;
    let sched = cfg.scheduler(cfg.rate_thresholds[0]);
    let radio = *channel.radio();
    let n = initial.side.device_count();
    let files = initial.side.file_count();
    let mut state = initial.clone();
    let mut r = rng(seed);
    let mut durations = 0.0;
    let mut status = RunStatus::Completed;
    let mut slot = 0;
    while !state.side.all_satisfied() {
        if slot >= sched.slot_cap {
            return Err(format!("slot cap hit at {slot}"));
        }
        let gains = channel.slot_gains(slot);
        let Some(d) = decide(kind, &state, &gains, &radio, &sched, &mut r).map_err(|e| e.to_string())? else {
            status = RunStatus::Stalled;
            break;
        };
        validate_decision(kind, &state, &d, &gains, &radio, sched.rate_threshold).map_err(|e| format!("slot {slot}: {e}"))?;
        let before = state.clone();
        apply_decision(kind, &mut state, &d).map_err(|e| e.to_string())?;
        durations += d.duration;

        let targeted = d.targeted();
        for u in 0..n {
            let (c, w) = (state.side.cache(u), state.side.demand(u));
            if c.intersection_len(w) != 0 || c.len() + w.len() != files {
                return Err(format!("slot {slot}: device {u} violates Has/Wants partition"));
            }
            if !before.side.cache(u).is_subset(c) {
                return Err(format!("slot {slot}: device {u} lost a cached file"));
            }
            let wanted = !before.side.demand(u).is_empty();
            let expect = before.ledger.delay(u) + if wanted && !targeted.contains(&u) { d.duration } else { 0.0 };
            if (state.ledger.delay(u) - expect).abs() > 1e-9 * expect.max(1.0) {
                return Err(format!("slot {slot}: delay of {u} is {} not {expect}", state.ledger.delay(u)));
            }
        }
        let (was, now) = (before.remaining_demand(), state.remaining_demand());
        if kind == SchedulerKind::CooperativeRlnc {
            if now > was {
                return Err(format!("slot {slot}: demand grew {was} -> {now}"));
            }
        } else if now + targeted.len() != was || targeted.is_empty() {
            return Err(format!("slot {slot}: demand {was} -> {now} with {} targets", targeted.len()));
        }
        if (state.ledger.elapsed() - durations).abs() > 1e-9 * durations {
            return Err(format!("slot {slot}: elapsed {} differs from summed durations {durations}", state.ledger.elapsed()));
        }
        slot += 1;
    }

    let run = |r: &mut ChaCha8Rng| d2d_clnc::run_schedule(&initial, &channel, kind, &sched, r);
    let a = run(&mut rng(seed));
    let b = run(&mut rng(seed));
    if a != b {
        return Err("two runs with one seed differ".into());
    }
    match (status, a) {
        (RunStatus::Stalled, Err(d2d_clnc::ScheduleError::Stall { .. })) => Ok(status),
        (RunStatus::Completed, Ok(res)) => {
            if res.slots != slot || (res.overall - durations).abs() > 1e-9 * durations.max(1.0) {
                return Err(format!("run_schedule gave {} over {} slots; stepping gave {durations} over {slot}", res.overall, res.slots));
            }
            if res.completion_times.iter().any(|&t| t > res.overall) || res.final_delays.iter().any(|&t| t > res.overall * (1.0 + 1e-12)) {
                return Err("per-device time exceeds the overall completion".into());
            }
            if cfg.payloads && !res.payloads_verified {
                return Err("decoded payloads differ from the frame".into());
            }
            Ok(status)
        }
        (s, other) => Err(format!("stepping ended {s:?} but run_schedule returned {other:?}")),
    }
}

/// Feasibility of a greedy MWIS over the first-slot graph of a random state.
pub fn check_greedy_is(cfg: &ScenarioConfig, seed: u64) -> Result<(), String> {
    let (state, channel) = harness::realize(cfg, seed).map_err(|e| e.to_string())?;
    let sched = cfg.scheduler(cfg.rate_thresholds[0]);
    let g = initial_conflict_graph(&state, &channel.slot_gains(0), channel.radio(), &sched).map_err(|e| e.to_string())?;
    let is = greedy_mwis(&g);
    if g.is_empty() {
        return if is.vertices.is_empty() { Ok(()) } else { Err("non-empty set on an empty graph".into()) };
    }
    let set = &is.vertices;
    for (a, &u) in set.iter().enumerate() {
        if set[a + 1..].iter().any(|&v| g.is_adjacent(u, v)) {
            return Err(format!("vertices {u} and another are adjacent"));
        }
    }
    if let Some(v) = (0..g.len()).find(|v| !set.contains(v) && set.iter().all(|&u| !g.is_adjacent(u, *v))) {
        return Err(format!("vertex {v} could be added"));
    }
    let rate = g.vertex(set[0]).rate;
    if set.iter().any(|&v| g.vertex(v).rate != rate) {
        return Err("mixed rates".into());
    }
    let mut seen = vec![false; state.side.device_count()];
    for t in g.transmissions(set) {
        let packet = FileSet::from_files(state.side.file_count(), t.files.iter().copied());
        if !packet.is_subset(state.side.cache(t.transmitter)) {
            return Err(format!("transmitter {} sends an uncached file", t.transmitter));
        }
        for &i in &t.targets {
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("device {i} targeted twice"));
            }
            if packet.intersection_len(state.side.demand(i)) != 1 {
                return Err(format!("device {i} cannot decode {:?}", t.files));
            }
        }
    }
    Ok(())
}

/// Realization `r` of a config, with the harness seed convention.
pub fn realization(cfg: &ScenarioConfig, r: usize) -> (NetworkState, ChannelRealization) {
    harness::realize(cfg, realization_seed(cfg.seed, 0, r)).expect("valid realization")
}

/// Smallest powers meeting `SINR ≥ gamma` on every listed link, by the
/// standard monotone fixed-point iteration from zero; `None` when any power
/// must exceed `q_max`.
pub fn min_powers(gains: &GainMatrix, noise: f64, q_max: f64, tx: &[usize], targets: &[Vec<usize>], gamma: f64) -> Option<Vec<f64>> {
    let mut q = vec![0.0; tx.len()];
    for _ in 0..100_000 {
        let mut next = vec![0.0f64; tx.len()];
        for (a, &k) in tx.iter().enumerate() {
            for &i in &targets[a] {
                let g = gains.get(k, i);
                if g <= 0.0 {
                    return None;
                }
                let int: f64 = noise + tx.iter().enumerate().filter(|&(b, _)| b != a).map(|(b, &j)| q[b] * gains.get(j, i)).sum::<f64>();
                next[a] = next[a].max(gamma * int / g);
            }
        }
        if next.iter().any(|&x| x > q_max * (1.0 + 1e-9)) {
            return None;
        }
        let step = next.iter().zip(&q).map(|(a, b)| a - b).fold(0.0, f64::max);
        q = next;
        if step <= 1e-15 * q_max {
            break;
        }
    }
    Some(q)
}

#[derive(PartialEq)]
struct Entry(f64, u32);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// A tiny static instance for exhaustive search.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub caches: Vec<FileSet>,
    pub files: usize,
    pub gains: GainMatrix,
    pub ladder: Vec<f64>,
}

impl TinyInstance {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let n = r.random_range(2..=4);
        let files = r.random_range(1..=4);
        let caches = loop {
            let c: Vec<FileSet> = (0..n).map(|_| FileSet::from_files(files, (0..files).filter(|_| r.random_bool(0.5)))).collect();
            let every_file_held = (0..files).all(|f| c.iter().any(|s| s.contains(f)));
            if every_file_held && c.iter().any(|s| s.len() < files) {
                break c;
            }
        };
        let rows = (0..n)
            .map(|k| (0..n).map(|i| if i == k { 0.0 } else { 10f64.powf(r.random_range(-1.5..1.5)) }).collect())
            .collect();
        let lo: f64 = r.random_range(0.5..1.5);
        let ladder = vec![lo, lo + r.random_range(0.5..2.0)];
        Self { caches, files, gains: GainMatrix::from_rows(rows).unwrap(), ladder }
    }

    pub fn channel(&self) -> ChannelRealization {
        ChannelRealization::fixed(self.gains.clone(), RadioParams::normalized())
    }

    pub fn state(&self, file_size: f64) -> NetworkState {
        let side = d2d_clnc::SideInformation::from_caches(self.files, self.caches.clone()).unwrap();
        NetworkState::new(d2d_clnc::Frame::new(self.files, file_size).unwrap(), side, &self.channel())
    }

    pub fn scheduler(&self) -> d2d_clnc::SchedulerConfig {
        d2d_clnc::SchedulerConfig {
            rate_threshold: self.ladder[0],
            rate_mode: RateMode::Ladder(self.ladder.clone()),
            ..Default::default()
        }
    }

    /// Minimum completion time over every schedule of multi-transmitter
    /// XOR slots at ladder rates with feasible powers, by Dijkstra over
    /// demand states. `None` when some demand can never be met.
    pub fn optimal_completion(&self, file_size: f64) -> Option<f64> {
        let n = self.caches.len();
        let f = self.files;
        let radio = RadioParams::normalized();
        let full = (1u32 << f) - 1;
        let start: u32 = (0..n).fold(0, |acc, u| {
            let c: u32 = self.caches[u].iter().fold(0, |m, x| m | 1 << x);
            acc | (full & !c) << (u * f)
        });
        let demand = |s: u32, u: usize| (s >> (u * f)) & full;
        let mut rates = self.ladder.clone();
        rates.sort_by(|a, b| b.total_cmp(a));
        let mut feasible_rate: HashMap<(u32, Vec<usize>), Option<f64>> = HashMap::new();

        let mut dist: HashMap<u32, f64> = HashMap::from([(start, 0.0)]);
        let mut heap = BinaryHeap::from([Entry(0.0, start)]);
        while let Some(Entry(d, s)) = heap.pop() {
            if s == 0 {
                return Some(d);
            }
            if dist.get(&s).is_some_and(|&b| d > b) {
                continue;
            }
            let wanted: u32 = (0..n).fold(0, |m, u| m | demand(s, u));
            for tmask in 1u32..(1 << n) {
                let tx: Vec<usize> = (0..n).filter(|&u| tmask >> u & 1 == 1).collect();
                if tx.iter().any(|&k| (full & !demand(s, k)) & wanted == 0) {
                    continue;
                }
                let rx: Vec<usize> = (0..n).filter(|&u| tmask >> u & 1 == 0 && demand(s, u) != 0).collect();
                // assign[j] = index into tx + 1, or 0 for "not targeted"
                let mut assign = vec![0usize; rx.len()];
                loop {
                    let targets: Vec<Vec<usize>> =
                        (0..tx.len()).map(|a| rx.iter().zip(&assign).filter(|&(_, &x)| x == a + 1).map(|(&i, _)| i).collect()).collect();
                    if targets.iter().all(|t| !t.is_empty()) {
                        let key = (tmask, assign.clone());
                        let rate = *feasible_rate.entry(key).or_insert_with(|| {
                            rates.iter().copied().find(|&r| {
                                min_powers(&self.gains, radio.noise_power_w, radio.max_power_w, &tx, &targets, 2f64.powf(r) - 1.0).is_some()
                            })
                        });
                        if let Some(r) = rate {
                            let cost = file_size / (r * radio.bandwidth_hz);
                            for next in self.packet_outcomes(s, &tx, &targets) {
                                let nd = d + cost;
                                if dist.get(&next).map_or(true, |&b| nd < b) {
                                    dist.insert(next, nd);
                                    heap.push(Entry(nd, next));
                                }
                            }
                        }
                    }
                    let mut j = 0;
                    while j < assign.len() {
                        assign[j] += 1;
                        if assign[j] <= tx.len() {
                            break;
                        }
                        assign[j] = 0;
                        j += 1;
                    }
                    if j == assign.len() {
                        break;
                    }
                }
            }
        }
        None
    }

    /// States reachable when each transmitter picks a packet that every one
    /// of its targets instantly decodes.
    fn packet_outcomes(&self, s: u32, tx: &[usize], targets: &[Vec<usize>]) -> Vec<u32> {
        let f = self.files;
        let full = (1u32 << f) - 1;
        let demand = |u: usize| (s >> (u * f)) & full;
        let mut states = vec![s];
        for (a, &k) in tx.iter().enumerate() {
            let cache = full & !demand(k);
            let mut next = Vec::new();
            let mut p = cache;
            while p != 0 {
                if targets[a].iter().all(|&i| (p & demand(i)).count_ones() == 1) {
                    for &st in &states {
                        let cleared = targets[a].iter().fold(st, |m, &i| m & !((p & demand(i)) << (i * f)));
                        next.push(cleared);
                    }
                }
                p = (p - 1) & cache;
            }
            next.sort_unstable();
            next.dedup();
            states = next;
        }
        states
    }
}

/// Paired 95% normal-approximation half-width of `a − b`.
pub fn paired_ci(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.959_963_984_540_054 * (var / n).sqrt())
}
