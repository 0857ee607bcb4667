//! Device geometry, fading, SINR and the capacity status matrix.
//!
//! Powers are linear watts throughout; dBm only shows up in [`RadioParams`]
//! constructors. Capacities are spectral efficiencies in bits/s/Hz and are
//! multiplied by the bandwidth wherever a duration is needed.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::DeviceId;

/// Path-loss intercept in dB at 1 km.
pub const PATH_LOSS_INTERCEPT_DB: f64 = 148.0;
/// Path-loss slope in dB per decade of distance (km).
pub const PATH_LOSS_SLOPE_DB: f64 = 37.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("at least two devices are required, got {0}")]
    TooFewDevices(usize),
    #[error("cell radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("device {0} lies outside the hexagonal cell")]
    OutsideCell(DeviceId),
    #[error("devices {0} and {1} are coincident")]
    Coincident(DeviceId, DeviceId),
    #[error("gain matrix must be square with a zero diagonal and finite non-negative entries")]
    InvalidGains,
    #[error("power {power} of device {device} is outside [0, {max}]")]
    PowerOutOfRange { device: DeviceId, power: f64, max: f64 },
    #[error("device {0} is not an active transmitter")]
    NotActive(DeviceId),
    #[error("device {0} cannot receive its own transmission")]
    SelfLink(DeviceId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Noise power, transmit power budget and bandwidth shared by all links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub noise_power_w: f64,
    pub max_power_w: f64,
    pub bandwidth_hz: f64,
}

impl RadioParams {
    /// Builds parameters from power spectral densities integrated over the band.
    pub fn from_densities(noise_dbm_per_hz: f64, max_power_dbm_per_hz: f64, bandwidth_hz: f64) -> Self {
        let band_db = 10.0 * bandwidth_hz.log10();
        Self {
            noise_power_w: dbm_to_watts(noise_dbm_per_hz + band_db),
            max_power_w: dbm_to_watts(max_power_dbm_per_hz + band_db),
            bandwidth_hz,
        }
    }

    /// Unit noise, unit power budget and unit bandwidth. Handy for hand-built
    /// instances where gains are read directly as SNRs.
    pub fn normalized() -> Self {
        Self {
            noise_power_w: 1.0,
            max_power_w: 1.0,
            bandwidth_hz: 1.0,
        }
    }
}

impl Default for RadioParams {
    /// -174 dBm/Hz noise and -42.6 dBm/Hz power budget over 1 MHz.
    fn default() -> Self {
        Self::from_densities(-174.0, -42.60, 1.0e6)
    }
}

/// Device positions inside a flat-topped hexagon centred at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    positions: Vec<[f64; 2]>,
    cell_radius: f64,
}

/// Membership test for the flat-topped hexagon of circumradius `radius`.
pub fn in_hexagon(p: [f64; 2], radius: f64) -> bool {
    let s3 = 3f64.sqrt();
    let (x, y) = (p[0].abs(), p[1].abs());
    y <= radius * s3 / 2.0 && s3 * x + y <= s3 * radius
}

impl Topology {
    pub fn new(positions: Vec<[f64; 2]>, cell_radius: f64) -> Result<Self, ChannelError> {
        if positions.len() < 2 {
            return Err(ChannelError::TooFewDevices(positions.len()));
        }
        if !(cell_radius > 0.0) || !cell_radius.is_finite() {
            return Err(ChannelError::InvalidRadius(cell_radius));
        }
        for (k, p) in positions.iter().enumerate() {
            if !in_hexagon(*p, cell_radius) {
                return Err(ChannelError::OutsideCell(k));
            }
            for (i, q) in positions.iter().enumerate().take(k) {
                if p == q {
                    return Err(ChannelError::Coincident(i, k));
                }
            }
        }
        Ok(Self { positions, cell_radius })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn cell_radius(&self) -> f64 {
        self.cell_radius
    }

    /// Euclidean distance in meters.
    pub fn distance(&self, a: DeviceId, b: DeviceId) -> f64 {
        let (p, q) = (self.positions[a], self.positions[b]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

/// Drops `n` devices uniformly into the hexagon by rejection from the
/// bounding rectangle. Coincident draws are resampled.
pub fn generate_topology<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Result<Topology, ChannelError> {
    if n < 2 {
        return Err(ChannelError::TooFewDevices(n));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(ChannelError::InvalidRadius(radius));
    }
    let half_height = radius * 3f64.sqrt() / 2.0;
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    while positions.len() < n {
        let p = [
            rng.random_range(-radius..=radius),
            rng.random_range(-half_height..=half_height),
        ];
        if in_hexagon(p, radius) && !positions.contains(&p) {
            positions.push(p);
        }
    }
    Ok(Topology { positions, cell_radius: radius })
}

/// Path loss in dB for a distance in meters.
pub fn path_loss_db(distance_m: f64) -> f64 {
    PATH_LOSS_INTERCEPT_DB + PATH_LOSS_SLOPE_DB * (distance_m / 1000.0).log10()
}

/// Linear power gains `|γ_{k,i}|²`, row = transmitter, column = receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    n: usize,
    data: Vec<f64>,
}

impl GainMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ChannelError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(ChannelError::InvalidGains);
            }
            for (i, g) in row.into_iter().enumerate() {
                if !g.is_finite() || g < 0.0 || (i == k && g != 0.0) {
                    return Err(ChannelError::InvalidGains);
                }
                data.push(g);
            }
        }
        Ok(Self { n, data })
    }

    /// A matrix with every off-diagonal entry equal to `gain`.
    pub fn uniform(n: usize, gain: f64) -> Self {
        let mut data = vec![gain; n * n];
        for k in 0..n {
            data[k * n + k] = 0.0;
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, k: DeviceId, i: DeviceId) -> f64 {
        self.data[k * self.n + i]
    }

    pub fn set(&mut self, k: DeviceId, i: DeviceId, gain: f64) {
        assert!(k != i || gain == 0.0, "diagonal gains must stay zero");
        assert!(gain.is_finite() && gain >= 0.0);
        self.data[k * self.n + i] = gain;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Entrywise product with a fading matrix (diagonal ignored).
    pub fn faded(&self, fading: &[f64]) -> Self {
        debug_assert_eq!(fading.len(), self.data.len());
        let data = self.data.iter().zip(fading).map(|(g, h)| g * h).collect();
        Self { n: self.n, data }
    }
}

/// Path loss plus log-normal shadowing, without small-scale fading.
pub fn sample_large_scale<R: Rng + ?Sized>(topo: &Topology, shadowing_sigma_db: f64, rng: &mut R) -> GainMatrix {
    let n = topo.len();
    let shadow = Normal::new(0.0, shadowing_sigma_db.max(0.0)).expect("finite sigma");
    let mut data = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            if k == i {
                continue;
            }
            let s_db = if shadowing_sigma_db > 0.0 { shadow.sample(rng) } else { 0.0 };
            let loss_db = path_loss_db(topo.distance(k, i)) + s_db;
            data[k * n + i] = 10f64.powf(-loss_db / 10.0);
        }
    }
    GainMatrix { n, data }
}

/// Draws `|h|²` for every ordered pair; Rayleigh fading with unit mean power.
pub fn sample_fading<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for i in 0..n {
            if k != i {
                out[k * n + i] = Exp1.sample(rng);
            }
        }
    }
    out
}

/// Full gain draw: path loss, shadowing and Rayleigh fading.
pub fn sample_gains<R: Rng + ?Sized>(topo: &Topology, shadowing_sigma_db: f64, rng: &mut R) -> GainMatrix {
    let large = sample_large_scale(topo, shadowing_sigma_db, rng);
    let fading = sample_fading(topo.len(), rng);
    large.faded(&fading)
}

/// Per-device transmit powers bounded by `max_power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerVector {
    powers: Vec<f64>,
    max_power: f64,
}

impl PowerVector {
    pub fn new(powers: Vec<f64>, max_power: f64) -> Result<Self, ChannelError> {
        for (device, &power) in powers.iter().enumerate() {
            if !(0.0..=max_power).contains(&power) {
                return Err(ChannelError::PowerOutOfRange { device, power, max: max_power });
            }
        }
        Ok(Self { powers, max_power })
    }

    pub fn full(n: usize, max_power: f64) -> Self {
        Self { powers: vec![max_power; n], max_power }
    }

    pub fn get(&self, k: DeviceId) -> f64 {
        self.powers[k]
    }

    pub fn max_power(&self) -> f64 {
        self.max_power
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.powers
    }
}

/// Noise plus interference seen at `i` from every active transmitter except `k`.
#[inline]
pub(crate) fn interference(gains: &GainMatrix, active: &[DeviceId], powers: &[f64], noise: f64, k: DeviceId, i: DeviceId) -> f64 {
    active
        .iter()
        .filter(|&&m| m != k)
        .fold(noise, |acc, &m| acc + powers[m] * gains.get(m, i))
}

/// Signal-to-interference-plus-noise ratio of link `k → i` while `active`
/// transmit with powers `q`.
pub fn sinr(gains: &GainMatrix, active: &[DeviceId], q: &PowerVector, noise: f64, k: DeviceId, i: DeviceId) -> Result<f64, ChannelError> {
    if q.as_slice().len() != gains.len() {
        return Err(ChannelError::Dimension { expected: gains.len(), got: q.as_slice().len() });
    }
    if !active.contains(&k) {
        return Err(ChannelError::NotActive(k));
    }
    if i == k {
        return Err(ChannelError::SelfLink(k));
    }
    let denom = interference(gains, active, q.as_slice(), noise, k, i);
    Ok(q.get(k) * gains.get(k, i) / denom)
}

/// `log₂(1 + sinr)`.
#[inline]
pub fn spectral_efficiency(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

/// What a [`CapacityMatrix`] was computed under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CapacityContext {
    /// All transmitters in `active` on simultaneously with `powers`.
    Active { active: Vec<DeviceId>, powers: Vec<f64> },
    /// Each row is a hypothetical transmitter at `candidate_power` added on
    /// top of the interferers in `active`.
    Candidate {
        active: Vec<DeviceId>,
        powers: Vec<f64>,
        candidate_power: f64,
    },
}

/// The N×N capacity status matrix in bits/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityMatrix {
    n: usize,
    values: Vec<f64>,
    context: CapacityContext,
}

impl CapacityMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, k: DeviceId, i: DeviceId) -> f64 {
        self.values[k * self.n + i]
    }

    pub fn row(&self, k: DeviceId) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn context(&self) -> &CapacityContext {
        &self.context
    }

    /// Builds a matrix from raw rows, mainly for tests and fixtures.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ChannelError> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for (k, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(ChannelError::Dimension { expected: n, got: row.len() });
            }
            for (i, c) in row.into_iter().enumerate() {
                if !c.is_finite() || c < 0.0 || (i == k && c != 0.0) {
                    return Err(ChannelError::InvalidGains);
                }
                values.push(c);
            }
        }
        let active = (0..n).collect();
        Ok(Self {
            n,
            values,
            context: CapacityContext::Active { active, powers: vec![] },
        })
    }

    /// Capacities each `candidate` would reach at `candidate_power` on top of
    /// the existing interferers. Rows of non-candidates are zero.
    pub fn for_candidates(
        gains: &GainMatrix,
        candidates: &[DeviceId],
        candidate_power: f64,
        active: &[DeviceId],
        powers: &[f64],
        noise: f64,
    ) -> Self {
        let n = gains.len();
        let mut base = vec![noise; n];
        for (i, b) in base.iter_mut().enumerate() {
            for &m in active {
                *b += powers[m] * gains.get(m, i);
            }
        }
        let mut values = vec![0.0; n * n];
        for &k in candidates {
            for i in 0..n {
                if i != k {
                    let s = candidate_power * gains.get(k, i) / base[i];
                    values[k * n + i] = spectral_efficiency(s);
                }
            }
        }
        Self {
            n,
            values,
            context: CapacityContext::Candidate {
                active: active.to_vec(),
                powers: powers.to_vec(),
                candidate_power,
            },
        }
    }
}

/// `C_{k,i} = log₂(1 + SINR_{k,i})` for every active `k` and every `i ≠ k`.
pub fn capacity_matrix(gains: &GainMatrix, active: &[DeviceId], q: &PowerVector, noise: f64) -> Result<CapacityMatrix, ChannelError> {
    let n = gains.len();
    if q.as_slice().len() != n {
        return Err(ChannelError::Dimension { expected: n, got: q.as_slice().len() });
    }
    let mut values = vec![0.0; n * n];
    for &k in active {
        for i in 0..n {
            if i != k {
                values[k * n + i] = spectral_efficiency(sinr(gains, active, q, noise, k, i)?);
            }
        }
    }
    Ok(CapacityMatrix {
        n,
        values,
        context: CapacityContext::Active {
            active: active.to_vec(),
            powers: q.as_slice().to_vec(),
        },
    })
}

/// Interference-free capacities with every device alone at full power.
pub fn interference_free_capacities(gains: &GainMatrix, radio: &RadioParams) -> CapacityMatrix {
    let all: Vec<DeviceId> = (0..gains.len()).collect();
    CapacityMatrix::for_candidates(gains, &all, radio.max_power_w, &[], &[], radio.noise_power_w)
}

/// How small-scale fading evolves across slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FadingMode {
    /// One draw for the whole run.
    Static,
    /// A fresh Rayleigh draw every slot, keyed by `seed` and the slot index.
    PerSlot { seed: u64 },
}

/// One channel realization: fixed large-scale gains plus a fading process.
///
/// Slot `0` always uses `initial`. Fading for later slots is a pure function
/// of `(seed, slot)`, so every scheme run on the same realization sees the
/// same sequence of channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    large_scale: GainMatrix,
    initial: GainMatrix,
    fading: FadingMode,
    radio: RadioParams,
}

impl ChannelRealization {
    /// A static channel with fully specified gains.
    pub fn fixed(gains: GainMatrix, radio: RadioParams) -> Self {
        Self {
            large_scale: gains.clone(),
            initial: gains,
            fading: FadingMode::Static,
            radio,
        }
    }

    pub fn new(large_scale: GainMatrix, initial_fading: &[f64], fading: FadingMode, radio: RadioParams) -> Self {
        let initial = large_scale.faded(initial_fading);
        Self { large_scale, initial, fading, radio }
    }

    /// Samples the large-scale gains and the slot-0 fading from `rng`.
    pub fn sample<R: Rng + ?Sized>(topo: &Topology, shadowing_sigma_db: f64, fading: FadingMode, radio: RadioParams, rng: &mut R) -> Self {
        let large = sample_large_scale(topo, shadowing_sigma_db, rng);
        let h = sample_fading(topo.len(), rng);
        Self::new(large, &h, fading, radio)
    }

    pub fn radio(&self) -> &RadioParams {
        &self.radio
    }

    pub fn len(&self) -> usize {
        self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.initial.is_empty()
    }

    pub fn initial_gains(&self) -> &GainMatrix {
        &self.initial
    }

    pub fn large_scale(&self) -> &GainMatrix {
        &self.large_scale
    }

    pub fn fading(&self) -> FadingMode {
        self.fading
    }

    pub fn slot_gains(&self, slot: usize) -> Cow<'_, GainMatrix> {
        match self.fading {
            FadingMode::PerSlot { seed } if slot > 0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::harness::derive_seed(seed, &[slot as u64]));
                let h = sample_fading(self.large_scale.len(), &mut rng);
                Cow::Owned(self.large_scale.faded(&h))
            }
            _ => Cow::Borrowed(&self.initial),
        }
    }

    /// Capacity matrix of the slot-0 channel with each device transmitting alone.
    pub fn interference_free_capacities(&self) -> CapacityMatrix {
        interference_free_capacities(&self.initial, &self.radio)
    }
}
