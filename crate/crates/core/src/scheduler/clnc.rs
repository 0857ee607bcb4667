//! Multi-transmitter CLNC slots and the single-transmitter special case.

use crate::channel::{CapacityMatrix, GainMatrix, RadioParams};
use crate::graph::{ConflictGraph, GraphInput, RateMode, ScheduledTransmission, Weighting};
use crate::mwis::greedy_mwis;
use crate::power::{allocate_power, ScheduleContext};
use crate::state::FileSet;
use crate::DeviceId;

use super::{NetworkState, ScheduleError, SchedulerConfig, SlotDecision, Transmission};

/// Devices holding at least one file some device still wants. A cached
/// file is never wanted by its holder, so any demand for it comes from others.
pub(super) fn useful_transmitters(state: &NetworkState) -> Vec<DeviceId> {
    let side = &state.side;
    let mut wanted = FileSet::empty(side.file_count());
    for u in 0..side.device_count() {
        wanted.union_with(side.demand(u));
    }
    (0..side.device_count())
        .filter(|&k| side.cache(k).intersection_len(&wanted) > 0)
        .collect()
}

/// Demanders with a finite lower bound, plus the bounds of all devices.
fn weighted_demanders(state: &NetworkState) -> (Vec<DeviceId>, Vec<f64>) {
    let lbs = state.lower_bounds();
    let d = state.side.demanders().into_iter().filter(|&u| lbs[u].is_finite()).collect();
    (d, lbs)
}

/// Conflict graph of `transmitters` → `targets`, with candidate capacities
/// at `Q_max` under interference from `active` at `powers`.
#[allow(clippy::too_many_arguments)]
fn candidate_graph(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
    transmitters: &[DeviceId],
    targets: &[DeviceId],
    lower_bounds: &[f64],
    active: &[DeviceId],
    powers: &[f64],
) -> Result<ConflictGraph, ScheduleError> {
    let caps = CapacityMatrix::for_candidates(gains, transmitters, radio.max_power_w, active, powers, radio.noise_power_w);
    Ok(ConflictGraph::build(&GraphInput {
        side: &state.side,
        capacities: &caps,
        transmitters,
        targets,
        rate_threshold: cfg.rate_threshold,
        rate_mode: &cfg.rate_mode,
        weighting: Weighting::LowerBound {
            lower_bounds,
            file_size_bits: state.frame.file_size_bits(),
            bandwidth_hz: radio.bandwidth_hz,
        },
    })?)
}

/// The heaviest transmitter of a greedy MWIS over `graph`.
fn pick_transmission(graph: &ConflictGraph) -> Option<ScheduledTransmission> {
    if graph.is_empty() {
        return None;
    }
    let is = greedy_mwis(graph);
    let mut best: Option<ScheduledTransmission> = None;
    for t in graph.transmissions(&is.vertices) {
        if best.as_ref().map_or(true, |b| t.weight > b.weight) {
            best = Some(t);
        }
    }
    best
}

/// The graph a slot starts from: every useful transmitter, every demander
/// with a finite bound, no interference.
pub fn initial_conflict_graph(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
) -> Result<ConflictGraph, ScheduleError> {
    let (demanders, lbs) = weighted_demanders(state);
    candidate_graph(state, gains, radio, cfg, &useful_transmitters(state), &demanders, &lbs, &[], &[])
}

/// Lowest admissible link rate: the threshold, lifted to the first ladder
/// step above it when a ladder is in use.
fn effective_threshold(cfg: &SchedulerConfig) -> f64 {
    match &cfg.rate_mode {
        RateMode::Ladder(l) => l
            .iter()
            .copied()
            .filter(|&r| r >= cfg.rate_threshold)
            .fold(f64::INFINITY, f64::min),
        _ => cfg.rate_threshold,
    }
}

/// Common rate for a slot whose weakest scheduled link supports `min_cap`.
fn common_rate(min_cap: f64, cfg: &SchedulerConfig) -> f64 {
    match &cfg.rate_mode {
        RateMode::Ladder(l) => l.iter().copied().filter(|&r| r <= min_cap).fold(0.0, f64::max),
        _ => min_cap,
    }
}

#[derive(Debug, Clone)]
struct Plan {
    txs: Vec<Transmission>,
    /// Aligned with `txs`.
    powers: Vec<f64>,
    min_capacity: f64,
    sum_capacity: f64,
    trace: Vec<f64>,
}

impl Plan {
    fn contains(&self, k: DeviceId) -> bool {
        self.txs.iter().any(|t| t.transmitter == k)
    }

    fn targets(&self) -> Vec<DeviceId> {
        self.txs.iter().flat_map(|t| t.targets.iter().copied()).collect()
    }

    fn full_powers(&self, n: usize) -> Vec<f64> {
        let mut q = vec![0.0; n];
        for (t, p) in self.txs.iter().zip(&self.powers) {
            q[t.transmitter] = *p;
        }
        q
    }

    fn duration(&self, state: &NetworkState, radio: &RadioParams, cfg: &SchedulerConfig) -> f64 {
        state.frame.file_size_bits() / (common_rate(self.min_capacity, cfg) * radio.bandwidth_hz)
    }

    fn into_decision(self, state: &NetworkState, radio: &RadioParams, cfg: &SchedulerConfig) -> SlotDecision {
        let n = state.side.device_count();
        let powers = self.full_powers(n);
        let rate = common_rate(self.min_capacity, cfg);
        let mut txs = self.txs;
        txs.sort_by_key(|t| t.transmitter);
        SlotDecision {
            duration: state.frame.file_size_bits() / (rate * radio.bandwidth_hz),
            transmissions: txs,
            rate,
            powers,
            sum_capacity: self.sum_capacity,
            power_trace: self.trace,
        }
    }
}

fn to_transmission(t: ScheduledTransmission) -> Transmission {
    Transmission { transmitter: t.transmitter, files: t.files, targets: t.targets }
}

/// One transmitter alone at full power.
fn single_plan(gains: &GainMatrix, radio: &RadioParams, t: Transmission) -> Plan {
    let caps: Vec<f64> = t
        .targets
        .iter()
        .map(|&i| crate::channel::spectral_efficiency(radio.max_power_w * gains.get(t.transmitter, i) / radio.noise_power_w))
        .collect();
    Plan {
        min_capacity: caps.iter().copied().fold(f64::INFINITY, f64::min),
        sum_capacity: caps.iter().sum(),
        powers: vec![radio.max_power_w],
        txs: vec![t],
        trace: Vec::new(),
    }
}

/// Keeps only the files the remaining targets still want.
fn prune_files(state: &NetworkState, t: &mut Transmission) {
    let side = &state.side;
    let mut keep: Vec<_> = t
        .targets
        .iter()
        .filter_map(|&i| t.files.iter().copied().find(|&f| side.demand(i).contains(f)))
        .collect();
    keep.sort_unstable();
    keep.dedup();
    t.files = keep;
}

/// Optimises powers, then drops links below the threshold and transmitters
/// left without targets, repeating until stable.
fn optimise(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
    mut txs: Vec<Transmission>,
) -> Result<Option<Plan>, ScheduleError> {
    let threshold = effective_threshold(cfg);
    loop {
        if txs.is_empty() {
            return Ok(None);
        }
        let ctx = ScheduleContext::new(
            txs.iter().map(|t| t.transmitter).collect(),
            txs.iter().map(|t| t.targets.clone()).collect(),
            gains,
            radio.noise_power_w,
            radio.max_power_w,
            cfg.power,
        )?;
        let alloc = allocate_power(&ctx);
        let caps = ctx.link_capacities(&alloc.powers);
        let mut changed = false;
        let mut next = Vec::with_capacity(txs.len());
        for (mut t, row) in txs.into_iter().zip(&caps) {
            let before = t.targets.len();
            t.targets = t.targets.iter().zip(row).filter(|&(_, &c)| c >= threshold).map(|(&i, _)| i).collect();
            if t.targets.len() != before {
                changed = true;
                prune_files(state, &mut t);
            }
            if !t.targets.is_empty() {
                next.push(t);
            }
        }
        if !changed {
            let flat = caps.iter().flatten();
            return Ok(Some(Plan {
                min_capacity: flat.clone().copied().fold(f64::INFINITY, f64::min),
                sum_capacity: flat.sum(),
                powers: alloc.powers,
                txs: next,
                trace: alloc.objective_trace,
            }));
        }
        txs = next;
    }
}

/// Projected completion-time bound of a plan: the worst device bound after
/// charging the slot to every untargeted demander, then the total.
fn projected_score(plan: &Plan, demanders: &[DeviceId], lbs: &[f64], duration: f64) -> (f64, f64) {
    let targets = plan.targets();
    demanders
        .iter()
        .map(|&u| if targets.contains(&u) { lbs[u] } else { lbs[u] + duration })
        .fold((f64::NEG_INFINITY, 0.0), |(m, s), x| (m.max(x), s + x))
}

fn first_plan(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
) -> Result<Option<(Plan, Vec<DeviceId>, Vec<f64>, Vec<DeviceId>)>, ScheduleError> {
    let (demanders, lbs) = weighted_demanders(state);
    if demanders.is_empty() {
        return Ok(None);
    }
    let pool = useful_transmitters(state);
    let graph = candidate_graph(state, gains, radio, cfg, &pool, &demanders, &lbs, &[], &[])?;
    let Some(t) = pick_transmission(&graph) else {
        return Ok(None);
    };
    Ok(Some((single_plan(gains, radio, to_transmission(t)), demanders, lbs, pool)))
}

/// The first admitted transmitter alone at `Q_max`.
pub fn ra_idnc_single_slot(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
) -> Result<Option<SlotDecision>, ScheduleError> {
    Ok(first_plan(state, gains, radio, cfg)?.map(|(p, ..)| p.into_decision(state, radio, cfg)))
}

/// Admits transmitters one at a time while the power-optimised
/// sum-capacity strictly improves, and returns the admitted configuration
/// with the smallest projected completion-time bound.
pub fn clnc_slot(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
) -> Result<Option<SlotDecision>, ScheduleError> {
    let Some((mut current, demanders, lbs, pool)) = first_plan(state, gains, radio, cfg)? else {
        return Ok(None);
    };
    let n = state.side.device_count();
    let mut best_score = projected_score(&current, &demanders, &lbs, current.duration(state, radio, cfg));
    let mut best = current.clone();
    let mut rejected: Vec<DeviceId> = Vec::new();

    for _ in 0..4 * n {
        let active: Vec<DeviceId> = current.txs.iter().map(|t| t.transmitter).collect();
        let targeted = current.targets();
        let busy = |u: &DeviceId| active.contains(u) || targeted.contains(u);
        let candidates: Vec<DeviceId> = pool.iter().copied().filter(|u| !busy(u) && !rejected.contains(u)).collect();
        let eligible: Vec<DeviceId> = demanders.iter().copied().filter(|u| !busy(u)).collect();
        if candidates.is_empty() || eligible.is_empty() {
            break;
        }
        // Devices left out so far would sit through the current slot.
        let slot = current.duration(state, radio, cfg);
        let mut provisional = lbs.clone();
        eligible.iter().for_each(|&u| provisional[u] += slot);
        let powers = current.full_powers(n);
        let graph = candidate_graph(state, gains, radio, cfg, &candidates, &eligible, &provisional, &active, &powers)?;
        let Some(cand) = pick_transmission(&graph) else {
            break;
        };
        let k = cand.transmitter;
        let mut tentative = current.txs.clone();
        tentative.push(to_transmission(cand));
        match optimise(state, gains, radio, cfg, tentative)? {
            Some(plan) if plan.contains(k) && plan.sum_capacity > current.sum_capacity * (1.0 + cfg.admission_margin) => {
                current = plan;
                let score = projected_score(&current, &demanders, &lbs, current.duration(state, radio, cfg));
                if score < best_score {
                    best_score = score;
                    best = current.clone();
                }
            }
            _ => rejected.push(k),
        }
    }
    Ok(Some(best.into_decision(state, radio, cfg)))
}
