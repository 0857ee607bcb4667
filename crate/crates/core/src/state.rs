//! Frame, per-device side information, XOR coding and the delay ledger.

use fixedbitset::FixedBitSet;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::CapacityMatrix;
use crate::{DeviceId, FileId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("a frame needs at least one file and a positive file size (got F={files}, B={size})")]
    InvalidFrame { files: usize, size: f64 },
    #[error("cache fraction range [{lo}, {hi}] must satisfy 0 < lo <= hi < 1")]
    InvalidCacheRange { lo: f64, hi: f64 },
    #[error("demand ratio {0} must lie strictly between 0 and 1")]
    InvalidDemandRatio(f64),
    #[error("{devices} devices caching at most {max_cache} files each cannot cover {files} files")]
    InfeasibleCoverage { devices: usize, max_cache: usize, files: usize },
    #[error("file {file} is not cached by any device")]
    Uncovered { file: FileId },
    #[error("device {device}: cache and demand sets must partition the frame")]
    NotPartition { device: DeviceId },
    #[error("an encoded packet needs at least one file")]
    EmptyPacket,
    #[error("device {device} does not cache file {file}")]
    NotCached { device: DeviceId, file: FileId },
    #[error("packet from device {transmitter} is not instantly decodable at device {device}")]
    NotDecodable { transmitter: DeviceId, device: DeviceId },
    #[error("device {0} is both transmitting and targeted in one slot")]
    HalfDuplex(DeviceId),
    #[error("slot duration must be finite and non-negative, got {0}")]
    InvalidDuration(f64),
    #[error("payload length mismatch")]
    PayloadLength,
}

/// A set of file ids backed by a bitset of width `F`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FileSet(FixedBitSet);

impl FileSet {
    pub fn empty(file_count: usize) -> Self {
        Self(FixedBitSet::with_capacity(file_count))
    }

    pub fn full(file_count: usize) -> Self {
        let mut b = FixedBitSet::with_capacity(file_count);
        b.insert_range(..);
        Self(b)
    }

    pub fn from_files(file_count: usize, files: impl IntoIterator<Item = FileId>) -> Self {
        let mut s = Self::empty(file_count);
        for f in files {
            s.insert(f);
        }
        s
    }

    pub fn universe(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn contains(&self, f: FileId) -> bool {
        self.0.contains(f)
    }

    pub fn insert(&mut self, f: FileId) {
        self.0.insert(f);
    }

    pub fn remove(&mut self, f: FileId) {
        self.0.set(f, false);
    }

    pub fn len(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn iter(&self) -> impl Iterator<Item = FileId> + '_ {
        self.0.ones()
    }

    pub fn complement(&self) -> Self {
        let mut b = self.0.clone();
        b.toggle_range(..);
        Self(b)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection_len(&self, other: &Self) -> usize {
        self.0.intersection_count(&other.0)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self(&self.0 & &other.0)
    }

    pub fn union_with(&mut self, other: &Self) {
        self.0.union_with(&other.0);
    }

    pub fn to_vec(&self) -> Vec<FileId> {
        self.iter().collect()
    }
}

impl std::fmt::Debug for FileSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for FileSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

/// The `F` files every device eventually needs, each `B` bits long.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    file_count: usize,
    file_size_bits: f64,
    payloads: Option<Vec<Vec<u8>>>,
}

impl Frame {
    pub fn new(file_count: usize, file_size_bits: f64) -> Result<Self, StateError> {
        if file_count == 0 || !(file_size_bits >= 1.0) || !file_size_bits.is_finite() {
            return Err(StateError::InvalidFrame { files: file_count, size: file_size_bits });
        }
        Ok(Self { file_count, file_size_bits, payloads: None })
    }

    /// A frame carrying random bytes, `⌈B/8⌉` per file.
    pub fn with_random_payloads<R: Rng + ?Sized>(file_count: usize, file_size_bits: f64, rng: &mut R) -> Result<Self, StateError> {
        let mut frame = Self::new(file_count, file_size_bits)?;
        let bytes = (file_size_bits / 8.0).ceil() as usize;
        frame.payloads = Some(
            (0..file_count)
                .map(|_| {
                    let mut v = vec![0u8; bytes];
                    rng.fill_bytes(&mut v);
                    v
                })
                .collect(),
        );
        Ok(frame)
    }

    pub fn file_count(&self) -> usize {
        self.file_count
    }

    pub fn file_size_bits(&self) -> f64 {
        self.file_size_bits
    }

    pub fn payload(&self, f: FileId) -> Option<&[u8]> {
        self.payloads.as_ref().map(|p| p[f].as_slice())
    }

    pub fn has_payloads(&self) -> bool {
        self.payloads.is_some()
    }
}

/// An XOR of files sent by one transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedPacket {
    pub transmitter: DeviceId,
    pub files: FileSet,
    pub payload: Option<Vec<u8>>,
}

/// How initial caches are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CachePlacement {
    /// Cache size uniform over `[⌊lo·F⌋, ⌊hi·F⌋]`, contents uniform.
    Fraction { lo: f64, hi: f64 },
    /// Each device demands a uniform `⌈μF⌉`-subset and caches the rest.
    DemandRatio(f64),
}

/// Cache and demand sets of every device, with optional cached payloads.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInformation {
    caches: Vec<FileSet>,
    demands: Vec<FileSet>,
    payloads: Option<Vec<Vec<Option<Vec<u8>>>>>,
}

impl SideInformation {
    /// Builds side information from explicit caches; demands are the complements.
    pub fn from_caches(file_count: usize, caches: Vec<FileSet>) -> Result<Self, StateError> {
        let mut covered = FileSet::empty(file_count);
        for (device, c) in caches.iter().enumerate() {
            if c.universe() != file_count {
                return Err(StateError::NotPartition { device });
            }
            covered.union_with(c);
        }
        if let Some(file) = covered.complement().iter().next() {
            return Err(StateError::Uncovered { file });
        }
        let demands = caches.iter().map(FileSet::complement).collect();
        Ok(Self { caches, demands, payloads: None })
    }

    /// Copies the frame's payloads into each device's cached files.
    pub fn attach_payloads(&mut self, frame: &Frame) {
        if !frame.has_payloads() {
            return;
        }
        let p = self
            .caches
            .iter()
            .map(|c| {
                (0..frame.file_count())
                    .map(|f| c.contains(f).then(|| frame.payload(f).unwrap().to_vec()))
                    .collect()
            })
            .collect();
        self.payloads = Some(p);
    }

    pub fn device_count(&self) -> usize {
        self.caches.len()
    }

    pub fn file_count(&self) -> usize {
        self.caches.first().map_or(0, FileSet::universe)
    }

    pub fn cache(&self, u: DeviceId) -> &FileSet {
        &self.caches[u]
    }

    pub fn demand(&self, u: DeviceId) -> &FileSet {
        &self.demands[u]
    }

    pub fn caches(&self) -> &[FileSet] {
        &self.caches
    }

    /// Devices that still want at least one file.
    pub fn demanders(&self) -> Vec<DeviceId> {
        (0..self.device_count()).filter(|&u| !self.demands[u].is_empty()).collect()
    }

    pub fn all_satisfied(&self) -> bool {
        self.demands.iter().all(FileSet::is_empty)
    }

    pub fn cached_payload(&self, u: DeviceId, f: FileId) -> Option<&[u8]> {
        self.payloads.as_ref()?[u][f].as_deref()
    }

    /// XORs the given cached files of `transmitter` into a packet.
    pub fn encode(&self, transmitter: DeviceId, files: &[FileId]) -> Result<CodedPacket, StateError> {
        if files.is_empty() {
            return Err(StateError::EmptyPacket);
        }
        let cache = &self.caches[transmitter];
        if let Some(&file) = files.iter().find(|&&f| !cache.contains(f)) {
            return Err(StateError::NotCached { device: transmitter, file });
        }
        let set = FileSet::from_files(self.file_count(), files.iter().copied());
        let payload = match &self.payloads {
            Some(p) => {
                let mut acc: Option<Vec<u8>> = None;
                for f in set.iter() {
                    let bytes = p[transmitter][f].as_ref().expect("cached file has payload");
                    match acc.as_mut() {
                        None => acc = Some(bytes.clone()),
                        Some(a) => xor_into(a, bytes)?,
                    }
                }
                acc
            }
            None => None,
        };
        Ok(CodedPacket { transmitter, files: set, payload })
    }

    /// True iff exactly one file of the packet is still wanted by `u`.
    pub fn is_instantly_decodable(&self, packet: &CodedPacket, u: DeviceId) -> bool {
        u != packet.transmitter && packet.files.intersection_len(&self.demands[u]) == 1
    }

    /// Decodes `packet` at `u`, moving the recovered file into its cache.
    pub fn apply_decode(&mut self, packet: &CodedPacket, u: DeviceId) -> Result<FileId, StateError> {
        if !self.is_instantly_decodable(packet, u) {
            return Err(StateError::NotDecodable { transmitter: packet.transmitter, device: u });
        }
        let wanted = packet.files.iter().find(|&f| self.demands[u].contains(f)).unwrap();
        if let (Some(store), Some(bytes)) = (self.payloads.as_mut(), packet.payload.as_ref()) {
            let mut out = bytes.clone();
            for f in packet.files.iter().filter(|&f| f != wanted) {
                xor_into(&mut out, store[u][f].as_ref().expect("cached file has payload"))?;
            }
            store[u][wanted] = Some(out);
        }
        self.demands[u].remove(wanted);
        self.caches[u].insert(wanted);
        Ok(wanted)
    }

    /// Block-decodes at `u` every file of `from`'s cache that `u` still
    /// wants, as after collecting enough independent random combinations.
    /// Returns the recovered files.
    pub fn absorb_cache_of(&mut self, u: DeviceId, from: DeviceId) -> Vec<FileId> {
        let gained = self.caches[from].intersection(&self.demands[u]).to_vec();
        for &f in &gained {
            if let Some(store) = self.payloads.as_mut() {
                store[u][f] = store[from][f].clone();
            }
            self.demands[u].remove(f);
            self.caches[u].insert(f);
        }
        gained
    }

    /// Checks every device's cached payloads against the frame.
    pub fn payloads_match(&self, frame: &Frame) -> bool {
        let Some(p) = &self.payloads else { return true };
        p.iter().all(|dev| {
            dev.iter()
                .enumerate()
                .all(|(f, bytes)| bytes.as_deref().map_or(true, |b| Some(b) == frame.payload(f)))
        })
    }

    /// Structural checks: partitions per device and union coverage.
    pub fn validate(&self) -> Result<(), StateError> {
        let f = self.file_count();
        let mut covered = FileSet::empty(f);
        for u in 0..self.device_count() {
            let (c, w) = (&self.caches[u], &self.demands[u]);
            if c.intersection_len(w) != 0 || c.len() + w.len() != f {
                return Err(StateError::NotPartition { device: u });
            }
            covered.union_with(c);
        }
        match covered.complement().iter().next() {
            Some(file) => Err(StateError::Uncovered { file }),
            None => Ok(()),
        }
    }
}

fn xor_into(acc: &mut [u8], other: &[u8]) -> Result<(), StateError> {
    if acc.len() != other.len() {
        return Err(StateError::PayloadLength);
    }
    acc.iter_mut().zip(other).for_each(|(a, b)| *a ^= b);
    Ok(())
}

/// Draws initial caches for `n` devices and enforces that every file is
/// cached somewhere.
pub fn init_side_information<R: Rng + ?Sized>(frame: &Frame, n: usize, placement: CachePlacement, rng: &mut R) -> Result<SideInformation, StateError> {
    let f = frame.file_count();
    let (min_size, max_size) = match placement {
        CachePlacement::Fraction { lo, hi } => {
            if !(lo > 0.0 && lo <= hi && hi < 1.0) {
                return Err(StateError::InvalidCacheRange { lo, hi });
            }
            ((lo * f as f64).floor() as usize, (hi * f as f64).floor() as usize)
        }
        CachePlacement::DemandRatio(mu) => {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(StateError::InvalidDemandRatio(mu));
            }
            let size = f - ((mu * f as f64).ceil() as usize).min(f);
            (size, size)
        }
    };
    if n * max_size < f {
        return Err(StateError::InfeasibleCoverage { devices: n, max_cache: max_size, files: f });
    }
    let all: Vec<FileId> = (0..f).collect();
    let mut caches: Vec<FileSet> = (0..n)
        .map(|_| {
            let size = rng.random_range(min_size..=max_size);
            FileSet::from_files(f, all.choose_multiple(rng, size).copied())
        })
        .collect();

    let mut coverage = vec![0usize; f];
    for c in &caches {
        c.iter().for_each(|h| coverage[h] += 1);
    }
    let mut uncovered: Vec<FileId> = (0..f).filter(|&h| coverage[h] == 0).collect();
    uncovered.shuffle(rng);
    for h in uncovered {
        let roomy: Vec<DeviceId> = (0..n).filter(|&u| caches[u].len() < max_size).collect();
        if let Some(&u) = roomy.choose(rng) {
            caches[u].insert(h);
        } else {
            // Every cache is full, so some file is held twice; swap it out.
            let donors: Vec<DeviceId> = (0..n).filter(|&u| caches[u].iter().any(|g| coverage[g] > 1)).collect();
            let &u = donors.choose(rng).expect("pigeonhole guarantees a duplicate");
            let dups: Vec<FileId> = caches[u].iter().filter(|&g| coverage[g] > 1).collect();
            let &g = dups.choose(rng).unwrap();
            caches[u].remove(g);
            coverage[g] -= 1;
            caches[u].insert(h);
        }
        coverage[h] += 1;
    }
    let mut side = SideInformation::from_caches(f, caches)?;
    side.attach_payloads(frame);
    Ok(side)
}

/// Accumulated delay per device plus the elapsed time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLedger {
    delays: Vec<f64>,
    initial_demand: Vec<usize>,
    file_size_bits: f64,
    elapsed: f64,
}

impl DelayLedger {
    pub fn new(side: &SideInformation, file_size_bits: f64) -> Self {
        let n = side.device_count();
        Self {
            delays: vec![0.0; n],
            initial_demand: (0..n).map(|u| side.demand(u).len()).collect(),
            file_size_bits,
            elapsed: 0.0,
        }
    }

    pub fn delay(&self, u: DeviceId) -> f64 {
        self.delays[u]
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn initial_demand(&self, u: DeviceId) -> usize {
        self.initial_demand[u]
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    pub fn file_size_bits(&self) -> f64 {
        self.file_size_bits
    }

    /// Charges a slot of `duration` seconds. Demanding devices that are not
    /// targeted accrue it, which includes every demanding transmitter. Call
    /// before the slot's decodes are applied.
    pub fn accrue(&mut self, side: &SideInformation, duration: f64, targeted: &[DeviceId], transmitters: &[DeviceId]) -> Result<(), StateError> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(StateError::InvalidDuration(duration));
        }
        if let Some(&u) = targeted.iter().find(|u| transmitters.contains(u)) {
            return Err(StateError::HalfDuplex(u));
        }
        for u in side.demanders() {
            if !targeted.contains(&u) {
                self.delays[u] += duration;
            }
        }
        self.elapsed += duration;
        Ok(())
    }

    /// `B·|W_u(0)| / R̃_u + 𝕋_u`, with `R̃_u` in bits/s. Infinite when the
    /// device still needs files but cannot be reached.
    pub fn completion_lower_bound(&self, u: DeviceId, harmonic_rate: f64) -> f64 {
        let want = self.initial_demand[u];
        if want == 0 {
            return self.delays[u];
        }
        if !(harmonic_rate > 0.0) {
            return f64::INFINITY;
        }
        self.file_size_bits * want as f64 / harmonic_rate + self.delays[u]
    }
}

/// Harmonic mean of the rates (bits/s) from every other device to each
/// device. Zero-capacity links are left out; a device with no usable link
/// gets `0`.
pub fn harmonic_rates(capacities: &CapacityMatrix, bandwidth_hz: f64) -> Vec<f64> {
    let n = capacities.len();
    (0..n)
        .map(|u| {
            let (count, inv) = (0..n)
                .filter(|&k| k != u)
                .map(|k| capacities.get(k, u) * bandwidth_hz)
                .filter(|&r| r > 0.0)
                .fold((0usize, 0.0), |(c, s), r| (c + 1, s + 1.0 / r));
            if count == 0 {
                0.0
            } else {
                count as f64 / inv
            }
        })
        .collect()
}
