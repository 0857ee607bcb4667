//! Conflict graph over (transmitter, rate, target, file) associations.
//!
//! Two vertices conflict when they carry different rates, when one
//! transmitter would have to send an XOR that one of the two targets cannot
//! decode, or when two transmitters would serve the same target. Any
//! independent set is therefore a feasible simultaneous transmission.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::channel::CapacityMatrix;
use crate::mwis::IndependenceGraph;
use crate::state::{FileSet, SideInformation};
use crate::{DeviceId, FileId};

/// Largest demander count for which `2^(N_w + 1)` stays comfortably finite.
pub const MAX_WEIGHTED_DEMANDERS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("capacity matrix covers {got} devices but side information has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("device {0} is out of range")]
    UnknownDevice(DeviceId),
    #[error("too many demanders ({0}) for exponential vertex weights")]
    TooManyDemanders(usize),
    #[error("lower bound of device {device} must be positive and finite, got {value}")]
    InvalidLowerBound { device: DeviceId, value: f64 },
    #[error("file size and bandwidth must be positive")]
    InvalidScale,
    #[error("rate ladder must contain positive finite rates")]
    InvalidLadder,
}

/// How candidate rates are chosen for each transmitter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// The distinct capacities towards eligible targets.
    #[default]
    Capacities,
    /// A fixed ladder of rates in bits/s/Hz.
    Ladder(Vec<f64>),
    /// A single placeholder rate of `1.0` covering every reachable target,
    /// for schemes that ignore the physical layer.
    Single,
}

/// How vertices are weighted.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// `2^(N_w − d + 1) · T̄ · r·W/B`, where `d` ranks targets by decreasing
    /// completion-time lower bound. `lower_bounds` is indexed by device id.
    LowerBound {
        lower_bounds: &'a [f64],
        file_size_bits: f64,
        bandwidth_hz: f64,
    },
    /// Every vertex weighs `1`.
    Uniform,
}

/// Everything needed to build one graph.
#[derive(Debug, Clone, Copy)]
pub struct GraphInput<'a> {
    pub side: &'a SideInformation,
    pub capacities: &'a CapacityMatrix,
    pub transmitters: &'a [DeviceId],
    pub targets: &'a [DeviceId],
    pub rate_threshold: f64,
    pub rate_mode: &'a RateMode,
    pub weighting: Weighting<'a>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Vertex {
    pub transmitter: DeviceId,
    /// Spectral efficiency in bits/s/Hz.
    pub rate: f64,
    pub target: DeviceId,
    pub file: FileId,
    pub weight: f64,
}

/// Vertices sharing a transmitter and a rate, stored contiguously and
/// sorted by target then file.
#[derive(Debug, Clone)]
struct Group {
    rate: f64,
    start: usize,
    /// `(target, start, end)` sub-ranges.
    targets: Vec<(DeviceId, usize, usize)>,
    end: usize,
}

#[derive(Debug, Clone)]
pub struct ConflictGraph {
    vertices: Vec<Vertex>,
    groups: Vec<Group>,
    group_of: Vec<u32>,
    caches: Vec<FileSet>,
}

/// Distinct capacities `C_{k,i} ≥ r_th` over `eligible` targets, descending.
pub fn candidate_rates(capacities: &CapacityMatrix, k: DeviceId, eligible: &[DeviceId], rate_threshold: f64) -> Vec<f64> {
    let mut rates: Vec<f64> = eligible
        .iter()
        .filter(|&&i| i != k)
        .map(|&i| capacities.get(k, i))
        .filter(|&c| c > 0.0 && c >= rate_threshold)
        .collect();
    rates.sort_by(|a, b| b.total_cmp(a));
    rates.dedup();
    rates
}

/// `2^(N_w − d + 1) · T̄ · (r/B)` with `r` in bits/s.
pub fn vertex_weight(rank: usize, demander_count: usize, lower_bound: f64, rate_bps: f64, file_size_bits: f64) -> f64 {
    debug_assert!(rank >= 1 && rank <= demander_count);
    exp_factor(rank, demander_count) * lower_bound * (rate_bps / file_size_bits)
}

fn exp_factor(rank: usize, demander_count: usize) -> f64 {
    ((demander_count - rank + 1) as f64).exp2()
}

/// 1-based ranks of `devices` by decreasing lower bound, ties by id.
pub fn lower_bound_ranks(devices: &[DeviceId], lower_bounds: &[f64]) -> Vec<(DeviceId, usize)> {
    let mut order = devices.to_vec();
    order.sort_by(|&a, &b| lower_bounds[b].total_cmp(&lower_bounds[a]).then(a.cmp(&b)));
    order.into_iter().enumerate().map(|(d, u)| (u, d + 1)).collect()
}

impl ConflictGraph {
    pub fn build(input: &GraphInput<'_>) -> Result<Self, GraphError> {
        let side = input.side;
        let n = side.device_count();
        let cap = input.capacities;
        if cap.len() != n {
            return Err(GraphError::Dimension { expected: n, got: cap.len() });
        }
        if let Some(&u) = input.transmitters.iter().chain(input.targets).find(|&&u| u >= n) {
            return Err(GraphError::UnknownDevice(u));
        }
        if let RateMode::Ladder(l) = input.rate_mode {
            if l.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(GraphError::InvalidLadder);
            }
        }

        // Per-target multiplier so that weight = factor[i] * rate.
        let mut factor = vec![0.0; n];
        let mut targets: Vec<DeviceId> = input.targets.to_vec();
        targets.sort_unstable();
        targets.dedup();
        match input.weighting {
            Weighting::Uniform => targets.iter().for_each(|&i| factor[i] = 1.0),
            Weighting::LowerBound { lower_bounds, file_size_bits, bandwidth_hz } => {
                if !(file_size_bits > 0.0 && bandwidth_hz > 0.0) {
                    return Err(GraphError::InvalidScale);
                }
                if targets.len() > MAX_WEIGHTED_DEMANDERS {
                    return Err(GraphError::TooManyDemanders(targets.len()));
                }
                for (i, d) in lower_bound_ranks(&targets, lower_bounds) {
                    let lb = lower_bounds[i];
                    if !(lb.is_finite() && lb > 0.0) && !side.demand(i).is_empty() {
                        return Err(GraphError::InvalidLowerBound { device: i, value: lb });
                    }
                    // rate enters as r·W/B; keep the B division last so that
                    // scaling B by a power of two is exact
                    factor[i] = exp_factor(d, targets.len()) * lb * (bandwidth_hz / file_size_bits);
                }
            }
        }
        let uniform = matches!(input.weighting, Weighting::Uniform);

        let mut transmitters = input.transmitters.to_vec();
        transmitters.sort_unstable();
        transmitters.dedup();

        let mut vertices = Vec::new();
        let mut groups = Vec::new();
        for &k in &transmitters {
            let useful: Vec<(DeviceId, FileSet)> = targets
                .iter()
                .filter(|&&i| i != k && cap.get(k, i) > 0.0)
                .filter_map(|&i| {
                    let d = side.cache(k).intersection(side.demand(i));
                    (!d.is_empty()).then_some((i, d))
                })
                .collect();
            if useful.is_empty() {
                continue;
            }
            let ids: Vec<DeviceId> = useful.iter().map(|(i, _)| *i).collect();
            let max_c = ids.iter().map(|&i| cap.get(k, i)).fold(0.0, f64::max);
            let rates: Vec<f64> = match input.rate_mode {
                RateMode::Capacities => candidate_rates(cap, k, &ids, input.rate_threshold),
                RateMode::Ladder(l) => {
                    let mut r: Vec<f64> = l.iter().copied().filter(|&r| r >= input.rate_threshold && r <= max_c).collect();
                    r.sort_by(|a, b| b.total_cmp(a));
                    r.dedup();
                    r
                }
                RateMode::Single => vec![1.0],
            };
            for rate in rates {
                let start = vertices.len();
                let mut sub = Vec::new();
                for (i, files) in &useful {
                    let c = cap.get(k, *i);
                    let ok = match input.rate_mode {
                        RateMode::Single => true,
                        _ => c >= rate,
                    };
                    if !ok {
                        continue;
                    }
                    let s = vertices.len();
                    let weight = if uniform { 1.0 } else { factor[*i] * rate };
                    vertices.extend(files.iter().map(|file| Vertex { transmitter: k, rate, target: *i, file, weight }));
                    sub.push((*i, s, vertices.len()));
                }
                if vertices.len() > start {
                    groups.push(Group { rate, start, targets: sub, end: vertices.len() });
                }
            }
        }
        let mut group_of = vec![0u32; vertices.len()];
        for (g, grp) in groups.iter().enumerate() {
            group_of[grp.start..grp.end].iter_mut().for_each(|x| *x = g as u32);
        }
        Ok(Self {
            vertices,
            groups,
            group_of,
            caches: side.caches().to_vec(),
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &Vertex {
        &self.vertices[v]
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// The conflict relation evaluated directly on two vertices.
    pub fn conflicts(&self, a: &Vertex, b: &Vertex) -> bool {
        if a.rate != b.rate {
            return true;
        }
        if a.transmitter == b.transmitter {
            a.file != b.file && !(self.caches[b.target].contains(a.file) && self.caches[a.target].contains(b.file))
        } else {
            a.target == b.target
        }
    }

    /// Groups a set of vertices into per-transmitter transmissions.
    pub fn transmissions(&self, set: &[usize]) -> Vec<ScheduledTransmission> {
        let mut by_tx: Vec<ScheduledTransmission> = Vec::new();
        for &v in set {
            let x = &self.vertices[v];
            let entry = match by_tx.iter_mut().position(|t| t.transmitter == x.transmitter) {
                Some(p) => &mut by_tx[p],
                None => {
                    by_tx.push(ScheduledTransmission {
                        transmitter: x.transmitter,
                        files: Vec::new(),
                        targets: Vec::new(),
                        weight: 0.0,
                    });
                    by_tx.last_mut().unwrap()
                }
            };
            if !entry.files.contains(&x.file) {
                entry.files.push(x.file);
            }
            entry.targets.push(x.target);
            entry.weight += x.weight;
        }
        for t in &mut by_tx {
            t.files.sort_unstable();
            t.targets.sort_unstable();
        }
        by_tx.sort_by_key(|t| t.transmitter);
        by_tx
    }

    /// Vertex list and, for graphs up to `max_edges_vertices` vertices, the
    /// edge list, as JSON.
    pub fn to_json(&self, max_edges_vertices: usize) -> serde_json::Value {
        let edges: Option<Vec<(usize, usize)>> = (self.len() <= max_edges_vertices).then(|| {
            let mut e = Vec::new();
            for a in 0..self.len() {
                for b in a + 1..self.len() {
                    if self.is_adjacent(a, b) {
                        e.push((a, b));
                    }
                }
            }
            e
        });
        serde_json::json!({
            "vertex_count": self.len(),
            "vertices": self.vertices,
            "edges": edges,
        })
    }
}

/// One transmitter's share of an independent set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduledTransmission {
    pub transmitter: DeviceId,
    pub files: Vec<FileId>,
    pub targets: Vec<DeviceId>,
    /// Summed vertex weight.
    pub weight: f64,
}

impl IndependenceGraph for ConflictGraph {
    fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    fn weight(&self, v: usize) -> f64 {
        self.vertices[v].weight
    }

    fn is_adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.conflicts(&self.vertices[a], &self.vertices[b])
    }

    fn tie_key(&self, v: usize) -> [u64; 4] {
        let x = &self.vertices[v];
        [x.transmitter as u64, x.target as u64, x.file as u64, u64::MAX - x.rate.to_bits()]
    }

    /// Group-structured evaluation. Within a (transmitter, rate) group the
    /// compatible mass of `(i, h)` is `Σ_{t≠i} a_t([h ∈ L_t] + [h ∈ C_t]·|L_t ∩ C_i|)`
    /// where `L_t` holds the live files towards `t` and `a_t` its per-vertex
    /// weight. Across groups of equal rate only the target matters.
    fn weighted_degrees_within(&self, alive: &[bool]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices.len()];
        let f = self.caches.first().map_or(0, FileSet::universe);

        // Live file sets and weights per (group, target).
        struct Live {
            target: DeviceId,
            files: FileSet,
            unit: f64,
            total: f64,
        }
        let mut live: Vec<Vec<Live>> = Vec::with_capacity(self.groups.len());
        let mut group_total = vec![0.0; self.groups.len()];
        for (g, grp) in self.groups.iter().enumerate() {
            let mut per = Vec::new();
            for &(t, s, e) in &grp.targets {
                let mut files = FileSet::empty(f);
                let mut total = 0.0;
                let mut unit = 0.0;
                for v in s..e {
                    if alive[v] {
                        files.insert(self.vertices[v].file);
                        total += self.vertices[v].weight;
                        unit = self.vertices[v].weight;
                    }
                }
                if total > 0.0 || !files.is_empty() {
                    group_total[g] += total;
                    per.push(Live { target: t, files, unit, total });
                }
            }
            live.push(per);
        }

        // Groups sharing a rate value.
        let mut by_rate: HashMap<u64, Vec<usize>> = HashMap::new();
        for (g, grp) in self.groups.iter().enumerate() {
            if !live[g].is_empty() {
                by_rate.entry(grp.rate.to_bits()).or_default().push(g);
            }
        }

        for (g, grp) in self.groups.iter().enumerate() {
            if live[g].is_empty() {
                continue;
            }
            let peers = &by_rate[&grp.rate.to_bits()];
            for &(i, s, e) in &grp.targets {
                if !(s..e).any(|v| alive[v]) {
                    continue;
                }
                let ci = &self.caches[i];
                let overlap: Vec<usize> = live[g].iter().map(|l| l.files.intersection_len(ci)).collect();
                let cross: f64 = peers
                    .iter()
                    .filter(|&&p| p != g)
                    .map(|&p| {
                        let at_i = live[p].iter().find(|l| l.target == i).map_or(0.0, |l| l.total);
                        if at_i == group_total[p] {
                            0.0
                        } else {
                            group_total[p] - at_i
                        }
                    })
                    .sum();
                for v in s..e {
                    if !alive[v] {
                        continue;
                    }
                    let h = self.vertices[v].file;
                    let mut same = 0.0;
                    for (l, &m) in live[g].iter().zip(&overlap) {
                        if l.target == i {
                            continue;
                        }
                        let count = usize::from(l.files.contains(h)) + if self.caches[l.target].contains(h) { m } else { 0 };
                        if count > 0 {
                            same += l.unit * count as f64;
                        }
                    }
                    out[v] = same + cross;
                }
            }
        }
        out
    }
}

impl ConflictGraph {
    /// Index of the (transmitter, rate) group holding `v`.
    pub fn group_index(&self, v: usize) -> usize {
        self.group_of[v] as usize
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }
}
