//! Network-layer baselines: cooperative IDNC, RLNC and uncoded broadcast.
//! All of them transmit at `Q_max` and ignore the rate threshold.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::channel::{CapacityMatrix, GainMatrix, RadioParams};
use crate::graph::{ConflictGraph, GraphInput, RateMode, Weighting};
use crate::mwis::greedy_mwis;
use crate::DeviceId;

use super::clnc::useful_transmitters;
use super::{link_capacity, NetworkState, ScheduleError, SlotDecision, Transmission};

fn full_power_decision(state: &NetworkState, gains: &GainMatrix, radio: &RadioParams, transmissions: Vec<Transmission>, receivers: impl Fn(&Transmission) -> Vec<DeviceId>) -> SlotDecision {
    let n = state.side.device_count();
    let active: Vec<DeviceId> = transmissions.iter().map(|t| t.transmitter).collect();
    let mut powers = vec![0.0; n];
    active.iter().for_each(|&k| powers[k] = radio.max_power_w);
    let mut rate = f64::INFINITY;
    let mut sum = 0.0;
    for t in &transmissions {
        for i in receivers(t) {
            rate = rate.min(link_capacity(gains, radio.noise_power_w, &powers, &active, t.transmitter, i));
        }
        for &i in &t.targets {
            sum += link_capacity(gains, radio.noise_power_w, &powers, &active, t.transmitter, i);
        }
    }
    SlotDecision {
        duration: state.frame.file_size_bits() / (rate * radio.bandwidth_hz),
        transmissions,
        rate,
        powers,
        sum_capacity: sum,
        power_trace: Vec::new(),
    }
}

/// Adds transmitters one by one, each time the one whose best unit-weight
/// XOR packet reaches the most still-untargeted demanders. Everyone
/// transmits at `Q_max` and the common rate is the weakest scheduled link
/// under the resulting interference.
pub fn cooperative_idnc_slot(state: &NetworkState, gains: &GainMatrix, radio: &RadioParams) -> Result<Option<SlotDecision>, ScheduleError> {
    let side = &state.side;
    let demanders = side.demanders();
    let pool = useful_transmitters(state);
    let caps = CapacityMatrix::for_candidates(gains, &pool, radio.max_power_w, &[], &[], radio.noise_power_w);
    let mut txs: Vec<Transmission> = Vec::new();
    let mut busy = vec![false; side.device_count()];
    loop {
        let eligible: Vec<DeviceId> = demanders.iter().copied().filter(|&u| !busy[u]).collect();
        if eligible.is_empty() {
            break;
        }
        let mut best: Option<Transmission> = None;
        for &k in pool.iter().filter(|&&k| !busy[k]) {
            let g = ConflictGraph::build(&GraphInput {
                side,
                capacities: &caps,
                transmitters: &[k],
                targets: &eligible,
                rate_threshold: 0.0,
                rate_mode: &RateMode::Single,
                weighting: Weighting::Uniform,
            })?;
            if g.is_empty() {
                continue;
            }
            let is = greedy_mwis(&g);
            if let Some(t) = g.transmissions(&is.vertices).into_iter().next() {
                if best.as_ref().map_or(true, |b| t.targets.len() > b.targets.len()) {
                    best = Some(Transmission { transmitter: t.transmitter, files: t.files, targets: t.targets });
                }
            }
        }
        let Some(t) = best else { break };
        busy[t.transmitter] = true;
        t.targets.iter().for_each(|&i| busy[i] = true);
        txs.push(t);
    }
    if txs.is_empty() {
        return Ok(None);
    }
    txs.sort_by_key(|t| t.transmitter);
    let d = full_power_decision(state, gains, radio, txs, |t| t.targets.clone());
    Ok((d.rate > 0.0).then_some(d))
}

/// Current RLNC transmitter: the largest cache that still helps someone,
/// lowest id on ties.
fn rlnc_transmitter(state: &NetworkState) -> Option<DeviceId> {
    useful_transmitters(state)
        .into_iter()
        .map(|k| (state.side.cache(k).len(), k))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, k)| k)
}

/// Innovative-reception requirement of every device w.r.t. transmitter `k`,
/// continuing the current epoch when `k` is unchanged.
fn rlnc_requirements(state: &NetworkState, k: DeviceId) -> (Vec<usize>, Vec<usize>) {
    let n = state.side.device_count();
    if state.rlnc.epoch_transmitter == Some(k) {
        return (state.rlnc.required.clone(), state.rlnc.received.clone());
    }
    let required = (0..n)
        .map(|i| if i == k { 0 } else { state.side.cache(k).intersection_len(state.side.demand(i)) })
        .collect();
    (required, vec![0; n])
}

/// The largest cache broadcasts random combinations of all its files at the
/// rate of its weakest link to any other device.
pub fn rlnc_slot(state: &NetworkState, gains: &GainMatrix, radio: &RadioParams) -> Option<SlotDecision> {
    let k = rlnc_transmitter(state)?;
    let (required, received) = rlnc_requirements(state, k);
    let targets: Vec<DeviceId> = (0..state.side.device_count())
        .filter(|&i| i != k && received[i] < required[i])
        .collect();
    let t = Transmission { transmitter: k, files: state.side.cache(k).to_vec(), targets };
    let n = state.side.device_count();
    let d = full_power_decision(state, gains, radio, vec![t], |t| (0..n).filter(|&i| i != t.transmitter).collect());
    (d.rate > 0.0).then_some(d)
}

/// Counts an innovative packet at every target and block-decodes those that
/// have collected enough.
pub(super) fn rlnc_receive(state: &mut NetworkState, decision: &SlotDecision) {
    let t = &decision.transmissions[0];
    let k = t.transmitter;
    let (mut required, mut received) = rlnc_requirements(state, k);
    for &i in &t.targets {
        received[i] += 1;
        if received[i] >= required[i] {
            state.side.absorb_cache_of(i, k);
            required[i] = 0;
            received[i] = 0;
        }
    }
    state.rlnc.epoch_transmitter = Some(k);
    state.rlnc.required = required;
    state.rlnc.received = received;
}

/// A random useful device broadcasts, uncoded, the file of its cache that
/// the most devices lack, at the rate of its weakest link to any device.
pub fn uncoded_broadcast_slot<R: Rng + ?Sized>(state: &NetworkState, gains: &GainMatrix, radio: &RadioParams, rng: &mut R) -> Option<SlotDecision> {
    let side = &state.side;
    let n = side.device_count();
    let &k = useful_transmitters(state).choose(rng)?;
    let (count, file) = side
        .cache(k)
        .iter()
        .map(|f| ((0..n).filter(|&i| side.demand(i).contains(f)).count(), f))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))?;
    if count == 0 {
        return None;
    }
    let targets = (0..n).filter(|&i| side.demand(i).contains(file)).collect();
    let t = Transmission { transmitter: k, files: vec![file], targets };
    let d = full_power_decision(state, gains, radio, vec![t], |t| (0..n).filter(|&i| i != t.transmitter).collect());
    (d.rate > 0.0).then_some(d)
}
