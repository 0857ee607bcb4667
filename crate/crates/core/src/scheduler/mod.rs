//! Per-slot scheduling decisions and the run loop that applies them.

mod baselines;
mod clnc;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{spectral_efficiency, ChannelError, ChannelRealization, GainMatrix, RadioParams};
use crate::graph::{GraphError, RateMode};
use crate::power::{PowerConfig, PowerError};
use crate::state::{harmonic_rates, DelayLedger, FileSet, Frame, SideInformation, StateError};
use crate::{DeviceId, FileId};

pub use baselines::{cooperative_idnc_slot, rlnc_slot, uncoded_broadcast_slot};
pub use clnc::{clnc_slot, initial_conflict_graph, ra_idnc_single_slot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("no feasible transmission at slot {slot} with {remaining} files still wanted: {detail}")]
    Stall { slot: usize, remaining: usize, detail: String },
    #[error("slot cap of {0} reached")]
    SlotCap(usize),
    #[error("slot {slot} decision violates an invariant: {detail}")]
    Invariant { slot: usize, detail: String },
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// The five schemes a run can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchedulerKind {
    #[serde(rename = "clnc")]
    Clnc,
    #[serde(rename = "ra-idnc")]
    RaIdncSingle,
    #[serde(rename = "coop-idnc")]
    CooperativeIdnc,
    #[serde(rename = "rlnc")]
    CooperativeRlnc,
    #[serde(rename = "uncoded")]
    UncodedBroadcast,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::Clnc,
        SchedulerKind::RaIdncSingle,
        SchedulerKind::CooperativeIdnc,
        SchedulerKind::CooperativeRlnc,
        SchedulerKind::UncodedBroadcast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Clnc => "clnc",
            SchedulerKind::RaIdncSingle => "ra-idnc",
            SchedulerKind::CooperativeIdnc => "coop-idnc",
            SchedulerKind::CooperativeRlnc => "rlnc",
            SchedulerKind::UncodedBroadcast => "uncoded",
        }
    }

    /// Schemes that enforce the rate threshold.
    pub fn uses_rate_threshold(self) -> bool {
        matches!(self, SchedulerKind::Clnc | SchedulerKind::RaIdncSingle)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown scheme `{0}`; expected one of clnc, ra-idnc, coop-idnc, rlnc, uncoded")]
pub struct UnknownScheme(pub String);

impl FromStr for SchedulerKind {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownScheme(s.to_string()))
    }
}

/// Scheduler knobs shared by every scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// Minimum per-link spectral efficiency in bits/s/Hz.
    pub rate_threshold: f64,
    pub rate_mode: RateMode,
    pub power: PowerConfig,
    pub slot_cap: usize,
    /// Relative sum-capacity gain a new transmitter must bring.
    pub admission_margin: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            rate_threshold: 0.5,
            rate_mode: RateMode::Capacities,
            power: PowerConfig::default(),
            slot_cap: 10_000,
            admission_margin: 1e-9,
        }
    }
}

/// One transmitter's XOR packet and the devices meant to decode it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub transmitter: DeviceId,
    pub files: Vec<FileId>,
    pub targets: Vec<DeviceId>,
}

/// Everything that happens in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    /// Sorted by transmitter id.
    pub transmissions: Vec<Transmission>,
    /// Common rate in bits/s/Hz.
    pub rate: f64,
    /// Transmit power of every device in watts; zero when idle.
    pub powers: Vec<f64>,
    /// `B / (R · W)` seconds.
    pub duration: f64,
    /// Summed `log₂(1 + SINR)` over scheduled links at `powers`.
    pub sum_capacity: f64,
    /// Objective values from the last power allocation, when one ran.
    pub power_trace: Vec<f64>,
}

impl SlotDecision {
    pub fn transmitters(&self) -> Vec<DeviceId> {
        self.transmissions.iter().map(|t| t.transmitter).collect()
    }

    pub fn targeted(&self) -> Vec<DeviceId> {
        let mut v: Vec<DeviceId> = self.transmissions.iter().flat_map(|t| t.targets.iter().copied()).collect();
        v.sort_unstable();
        v
    }
}

/// Innovation bookkeeping for the RLNC baseline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RlncState {
    epoch_transmitter: Option<DeviceId>,
    required: Vec<usize>,
    received: Vec<usize>,
}

impl RlncState {
    pub fn received(&self, u: DeviceId) -> usize {
        self.received.get(u).copied().unwrap_or(0)
    }

    pub fn required(&self, u: DeviceId) -> usize {
        self.required.get(u).copied().unwrap_or(0)
    }
}

/// Side information, delay ledger and per-device reachability of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub frame: Frame,
    pub side: SideInformation,
    pub ledger: DelayLedger,
    /// Harmonic-mean incoming rate of each device in bits/s.
    pub harmonic: Vec<f64>,
    pub rlnc: RlncState,
}

impl NetworkState {
    pub fn new(frame: Frame, side: SideInformation, channel: &ChannelRealization) -> Self {
        let harmonic = harmonic_rates(&channel.interference_free_capacities(), channel.radio().bandwidth_hz);
        Self::with_harmonic(frame, side, harmonic)
    }

    pub fn with_harmonic(frame: Frame, side: SideInformation, harmonic: Vec<f64>) -> Self {
        let ledger = DelayLedger::new(&side, frame.file_size_bits());
        Self { frame, side, ledger, harmonic, rlnc: RlncState::default() }
    }

    /// Completion-time lower bound of every device.
    pub fn lower_bounds(&self) -> Vec<f64> {
        (0..self.side.device_count())
            .map(|u| self.ledger.completion_lower_bound(u, self.harmonic[u]))
            .collect()
    }

    pub fn remaining_demand(&self) -> usize {
        (0..self.side.device_count()).map(|u| self.side.demand(u).len()).sum()
    }
}

/// Computes one slot for `kind`.
pub fn decide<R: Rng + ?Sized>(
    kind: SchedulerKind,
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    cfg: &SchedulerConfig,
    rng: &mut R,
) -> Result<Option<SlotDecision>, ScheduleError> {
    Ok(match kind {
        SchedulerKind::Clnc => clnc_slot(state, gains, radio, cfg)?,
        SchedulerKind::RaIdncSingle => ra_idnc_single_slot(state, gains, radio, cfg)?,
        SchedulerKind::CooperativeIdnc => cooperative_idnc_slot(state, gains, radio)?,
        SchedulerKind::CooperativeRlnc => rlnc_slot(state, gains, radio),
        SchedulerKind::UncodedBroadcast => uncoded_broadcast_slot(state, gains, radio, rng),
    })
}

/// Capacity of `k → i` with every listed transmitter on at `powers`.
pub(crate) fn link_capacity(gains: &GainMatrix, noise: f64, powers: &[f64], active: &[DeviceId], k: DeviceId, i: DeviceId) -> f64 {
    let int = crate::channel::interference(gains, active, powers, noise, k, i);
    spectral_efficiency(powers[k] * gains.get(k, i) / int)
}

/// Checks the structural and physical invariants of a decision.
pub fn validate_decision(
    kind: SchedulerKind,
    state: &NetworkState,
    decision: &SlotDecision,
    gains: &GainMatrix,
    radio: &RadioParams,
    rate_threshold: f64,
) -> Result<(), String> {
    let side = &state.side;
    let n = side.device_count();
    let active = decision.transmitters();
    if decision.transmissions.is_empty() {
        return Err("no transmitters".into());
    }
    if decision.powers.len() != n {
        return Err("power vector has the wrong length".into());
    }
    let mut seen = vec![false; n];
    for (a, t) in decision.transmissions.iter().enumerate() {
        if active[..a].contains(&t.transmitter) {
            return Err(format!("transmitter {} listed twice", t.transmitter));
        }
        if t.files.is_empty() || t.targets.is_empty() {
            return Err(format!("transmitter {} has an empty packet or no targets", t.transmitter));
        }
        if let Some(f) = t.files.iter().find(|&&f| !side.cache(t.transmitter).contains(f)) {
            return Err(format!("transmitter {} does not cache file {f}", t.transmitter));
        }
        for &i in &t.targets {
            if active.contains(&i) {
                return Err(format!("device {i} transmits and receives"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("device {i} targeted twice"));
            }
            if kind != SchedulerKind::CooperativeRlnc {
                let packet = FileSet::from_files(side.file_count(), t.files.iter().copied());
                if packet.intersection_len(side.demand(i)) != 1 {
                    return Err(format!("device {i} cannot instantly decode the packet of {}", t.transmitter));
                }
            }
        }
    }
    for (u, &q) in decision.powers.iter().enumerate() {
        if !(0.0..=radio.max_power_w * (1.0 + 1e-12)).contains(&q) {
            return Err(format!("power {q} of device {u} outside [0, Q_max]"));
        }
        if q != 0.0 && !active.contains(&u) {
            return Err(format!("idle device {u} has power {q}"));
        }
    }
    if !(decision.rate > 0.0 && decision.rate.is_finite()) {
        return Err(format!("rate {} is not positive", decision.rate));
    }
    if kind.uses_rate_threshold() && decision.rate < rate_threshold {
        return Err(format!("rate {} below threshold {rate_threshold}", decision.rate));
    }
    for t in &decision.transmissions {
        let receivers: Vec<DeviceId> = match kind {
            SchedulerKind::CooperativeRlnc | SchedulerKind::UncodedBroadcast => (0..n).filter(|&i| i != t.transmitter).collect(),
            _ => t.targets.clone(),
        };
        for i in receivers {
            let c = link_capacity(gains, radio.noise_power_w, &decision.powers, &active, t.transmitter, i);
            if decision.rate > c * (1.0 + 1e-9) {
                return Err(format!("rate {} exceeds capacity {c} of link {} -> {i}", decision.rate, t.transmitter));
            }
        }
    }
    let expect = state.frame.file_size_bits() / (decision.rate * radio.bandwidth_hz);
    if (decision.duration - expect).abs() > 1e-12 * expect {
        return Err(format!("duration {} differs from B/(R·W) = {expect}", decision.duration));
    }
    Ok(())
}

/// What happened in one slot, in a serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub transmissions: Vec<Transmission>,
    pub rate: f64,
    /// Powers of the active transmitters, in transmission order.
    pub powers: Vec<f64>,
    pub duration: f64,
    pub sum_capacity: f64,
    /// Devices that decoded something new this slot.
    pub decoded: Vec<DeviceId>,
    pub remaining_demand: usize,
    pub power_trace: Vec<f64>,
}

/// Outcome of a complete run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: SchedulerKind,
    /// Elapsed time at each device's final decode (zero if it wanted nothing).
    pub completion_times: Vec<f64>,
    pub overall: f64,
    pub slots: usize,
    pub trace: Vec<SlotRecord>,
    pub final_delays: Vec<f64>,
    pub payloads_verified: bool,
}

impl RunResult {
    pub fn mean_transmitters_per_slot(&self) -> f64 {
        if self.trace.is_empty() {
            return 0.0;
        }
        self.trace.iter().map(|r| r.transmissions.len()).sum::<usize>() as f64 / self.trace.len() as f64
    }
}

/// Applies a decision: charges delay, then decodes. Returns the devices that
/// gained a file (or, for RLNC, an innovative packet).
pub fn apply_decision(kind: SchedulerKind, state: &mut NetworkState, decision: &SlotDecision) -> Result<Vec<DeviceId>, ScheduleError> {
    let targeted = decision.targeted();
    state.ledger.accrue(&state.side, decision.duration, &targeted, &decision.transmitters())?;
    if kind == SchedulerKind::CooperativeRlnc {
        baselines::rlnc_receive(state, decision);
        return Ok(targeted);
    }
    for t in &decision.transmissions {
        let packet = state.side.encode(t.transmitter, &t.files)?;
        for &i in &t.targets {
            state.side.apply_decode(&packet, i)?;
        }
    }
    Ok(targeted)
}

/// Runs `kind` until every demand is met.
pub fn run_schedule<R: Rng + ?Sized>(
    initial: &NetworkState,
    channel: &ChannelRealization,
    kind: SchedulerKind,
    cfg: &SchedulerConfig,
    rng: &mut R,
) -> Result<RunResult, ScheduleError> {
    let mut state = initial.clone();
    let n = state.side.device_count();
    let mut completion = vec![0.0; n];
    let mut trace = Vec::new();
    let radio = *channel.radio();
    let mut slot = 0;
    while !state.side.all_satisfied() {
        if slot >= cfg.slot_cap {
            return Err(ScheduleError::SlotCap(cfg.slot_cap));
        }
        let gains = channel.slot_gains(slot);
        let decision = decide(kind, &state, &gains, &radio, cfg, rng)?.ok_or_else(|| ScheduleError::Stall {
            slot,
            remaining: state.remaining_demand(),
            detail: stall_detail(&state),
        })?;
        validate_decision(kind, &state, &decision, &gains, &radio, cfg.rate_threshold)
            .map_err(|detail| ScheduleError::Invariant { slot, detail })?;
        let before: Vec<bool> = (0..n).map(|u| state.side.demand(u).is_empty()).collect();
        let decoded = apply_decision(kind, &mut state, &decision)?;
        let now = state.ledger.elapsed();
        for u in 0..n {
            if !before[u] && state.side.demand(u).is_empty() {
                completion[u] = now;
            }
        }
        trace.push(SlotRecord {
            slot,
            rate: decision.rate,
            powers: decision.transmissions.iter().map(|t| decision.powers[t.transmitter]).collect(),
            transmissions: decision.transmissions,
            duration: decision.duration,
            sum_capacity: decision.sum_capacity,
            decoded,
            remaining_demand: state.remaining_demand(),
            power_trace: decision.power_trace,
        });
        slot += 1;
    }
    let overall = completion.iter().copied().fold(0.0, f64::max);
    Ok(RunResult {
        scheme: kind,
        completion_times: completion,
        overall,
        slots: slot,
        trace,
        final_delays: state.ledger.delays().to_vec(),
        payloads_verified: state.side.payloads_match(&state.frame),
    })
}

fn stall_detail(state: &NetworkState) -> String {
    let wanting: Vec<String> = state
        .side
        .demanders()
        .into_iter()
        .map(|u| format!("u{u} wants {:?} (harmonic rate {:.3e})", state.side.demand(u), state.harmonic[u]))
        .collect();
    wanting.join("; ")
}

/// Builds a decision for an explicit schedule, computing the rate from the
/// given powers. Handy for replaying hand-made schedules.
pub fn manual_decision(
    state: &NetworkState,
    gains: &GainMatrix,
    radio: &RadioParams,
    transmissions: Vec<Transmission>,
    powers: Vec<f64>,
) -> SlotDecision {
    let active: Vec<DeviceId> = transmissions.iter().map(|t| t.transmitter).collect();
    let mut rate = f64::INFINITY;
    let mut sum = 0.0;
    for t in &transmissions {
        for &i in &t.targets {
            let c = link_capacity(gains, radio.noise_power_w, &powers, &active, t.transmitter, i);
            rate = rate.min(c);
            sum += c;
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

/// Same as [`manual_decision`] but with a prescribed common rate.
pub fn manual_decision_at_rate(
    state: &NetworkState,
    radio: &RadioParams,
    transmissions: Vec<Transmission>,
    powers: Vec<f64>,
    rate: f64,
) -> SlotDecision {
    SlotDecision {
        duration: state.frame.file_size_bits() / (rate * radio.bandwidth_hz),
        transmissions,
        rate,
        powers,
        sum_capacity: 0.0,
        power_trace: Vec::new(),
    }
}
