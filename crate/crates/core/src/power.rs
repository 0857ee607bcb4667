//! Transmit-power allocation for a fixed set of transmitters and targets.
//!
//! The update is the best-response fixed point
//!
//! ```text
//! Q_k = clamp[0, Q_max]( Σ_{i∈T_k} s_ki/(1+s_ki)  /  Σ_{m≠k} Σ_{j∈T_m} s_mj/(1+s_mj)² · g_kj / I_mj )
//! ```
//!
//! where `I_mj` is the noise plus interference at `j` excluding `m`. This is
//! the same quantity as `(s/(1+s))² · g_kj / (Q_m g_mj)` but stays finite when
//! a transmitter is switched off.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{spectral_efficiency, GainMatrix};
use crate::DeviceId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("transmitter list and target lists differ in length")]
    Shape,
    #[error("device {0} is targeted twice")]
    DuplicateTarget(DeviceId),
    #[error("transmitter {0} is also a target")]
    HalfDuplex(DeviceId),
    #[error("transmitter {0} is listed twice")]
    DuplicateTransmitter(DeviceId),
    #[error("device {0} is out of range")]
    UnknownDevice(DeviceId),
    #[error("initial power {initial} must lie in (0, {max}]")]
    InitialPower { initial: f64, max: f64 },
    #[error("noise power must be positive")]
    Noise,
}

/// Jacobi updates every transmitter from the same snapshot; Gauss-Seidel
/// uses fresh values as soon as they are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    #[default]
    Jacobi,
    GaussSeidel,
}

/// Iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerConfig {
    /// Relative objective change, and power step as a fraction of `Q_max`, that count as converged.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting power as a fraction of `Q_max`.
    pub initial_fraction: f64,
    pub order: UpdateOrder,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: 100,
            initial_fraction: 1.0,
            order: UpdateOrder::Jacobi,
        }
    }
}

/// A validated transmitter → targets assignment over a gain matrix.
#[derive(Debug, Clone)]
pub struct ScheduleContext<'a> {
    transmitters: Vec<DeviceId>,
    targets: Vec<Vec<DeviceId>>,
    gains: &'a GainMatrix,
    noise: f64,
    max_power: f64,
    config: PowerConfig,
}

impl<'a> ScheduleContext<'a> {
    pub fn new(
        transmitters: Vec<DeviceId>,
        targets: Vec<Vec<DeviceId>>,
        gains: &'a GainMatrix,
        noise: f64,
        max_power: f64,
        config: PowerConfig,
    ) -> Result<Self, PowerError> {
        if transmitters.len() != targets.len() {
            return Err(PowerError::Shape);
        }
        if !(noise > 0.0) {
            return Err(PowerError::Noise);
        }
        let q0 = config.initial_fraction * max_power;
        if !(q0 > 0.0 && q0 <= max_power) {
            return Err(PowerError::InitialPower { initial: q0, max: max_power });
        }
        let n = gains.len();
        let mut seen = vec![false; n];
        for (a, &k) in transmitters.iter().enumerate() {
            if k >= n {
                return Err(PowerError::UnknownDevice(k));
            }
            if transmitters[..a].contains(&k) {
                return Err(PowerError::DuplicateTransmitter(k));
            }
        }
        for &i in targets.iter().flatten() {
            if i >= n {
                return Err(PowerError::UnknownDevice(i));
            }
            if transmitters.contains(&i) {
                return Err(PowerError::HalfDuplex(i));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(PowerError::DuplicateTarget(i));
            }
        }
        Ok(Self { transmitters, targets, gains, noise, max_power, config })
    }

    pub fn transmitters(&self) -> &[DeviceId] {
        &self.transmitters
    }

    pub fn targets(&self) -> &[Vec<DeviceId>] {
        &self.targets
    }

    pub fn max_power(&self) -> f64 {
        self.max_power
    }

    pub fn config(&self) -> &PowerConfig {
        &self.config
    }

    /// Noise plus interference at `i` from every scheduled transmitter except index `a`.
    fn interference(&self, q: &[f64], a: usize, i: DeviceId) -> f64 {
        self.transmitters
            .iter()
            .zip(q)
            .enumerate()
            .filter(|&(b, _)| b != a)
            .fold(self.noise, |acc, (_, (&m, &p))| acc + p * self.gains.get(m, i))
    }

    /// SINR of every scheduled link, `s[a][t]` for transmitter `a`, target `t`,
    /// paired with the interference term it was computed from.
    fn link_state(&self, q: &[f64]) -> Vec<Vec<(f64, f64)>> {
        self.transmitters
            .iter()
            .enumerate()
            .map(|(a, &k)| {
                self.targets[a]
                    .iter()
                    .map(|&i| {
                        let int = self.interference(q, a, i);
                        (q[a] * self.gains.get(k, i) / int, int)
                    })
                    .collect()
            })
            .collect()
    }

    /// Capacity of every scheduled link in bits/s/Hz.
    pub fn link_capacities(&self, q: &[f64]) -> Vec<Vec<f64>> {
        self.link_state(q)
            .into_iter()
            .map(|row| row.into_iter().map(|(s, _)| spectral_efficiency(s)).collect())
            .collect()
    }

    /// Numerator and denominator of the update for transmitter `a`.
    fn update_terms(&self, links: &[Vec<(f64, f64)>], a: usize) -> (f64, f64) {
        let k = self.transmitters[a];
        let num: f64 = links[a].iter().map(|&(s, _)| s / (1.0 + s)).sum();
        let mut den = 0.0;
        for (b, row) in links.iter().enumerate() {
            if b == a {
                continue;
            }
            for (&(s, int), &j) in row.iter().zip(&self.targets[b]) {
                let g = self.gains.get(k, j);
                if s > 0.0 && g > 0.0 {
                    den += s / ((1.0 + s) * (1.0 + s)) * g / int;
                }
            }
        }
        (num, den)
    }

    fn best_response(&self, num: f64, den: f64) -> f64 {
        if !(num > 0.0) {
            0.0
        } else if !(den > 0.0) {
            self.max_power
        } else {
            (num / den).clamp(0.0, self.max_power)
        }
    }
}

/// Sum over scheduled links of `log₂(1 + SINR)`.
pub fn sum_capacity(ctx: &ScheduleContext<'_>, q: &[f64]) -> f64 {
    ctx.link_capacities(q).iter().flatten().sum()
}

/// One simultaneous update of every transmitter from the snapshot `q_hat`.
pub fn power_update_step(ctx: &ScheduleContext<'_>, q_hat: &[f64]) -> Vec<f64> {
    let links = ctx.link_state(q_hat);
    (0..ctx.transmitters.len())
        .map(|a| {
            let (num, den) = ctx.update_terms(&links, a);
            ctx.best_response(num, den)
        })
        .collect()
}

fn gauss_seidel_step(ctx: &ScheduleContext<'_>, q_hat: &[f64]) -> Vec<f64> {
    let mut q = q_hat.to_vec();
    for a in 0..q.len() {
        let links = ctx.link_state(&q);
        let (num, den) = ctx.update_terms(&links, a);
        q[a] = ctx.best_response(num, den);
    }
    q
}

/// Outcome of [`allocate_power`]. Powers are indexed like the context's
/// transmitter list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation {
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first update and after each one.
    pub objective_trace: Vec<f64>,
    /// `max_k |Q_k − update(Q)_k|` at the returned point.
    pub residual: f64,
}

impl PowerAllocation {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&0.0)
    }
}

/// Iterates the update from `initial_fraction · Q_max` until both the
/// relative objective change and the largest power step (relative to
/// `Q_max`) fall within the tolerance, or the iteration cap is hit.
pub fn allocate_power(ctx: &ScheduleContext<'_>) -> PowerAllocation {
    let cfg = ctx.config;
    let mut q = vec![cfg.initial_fraction * ctx.max_power; ctx.transmitters.len()];
    let mut obj = sum_capacity(ctx, &q);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        let next = match cfg.order {
            UpdateOrder::Jacobi => power_update_step(ctx, &q),
            UpdateOrder::GaussSeidel => gauss_seidel_step(ctx, &q),
        };
        iterations += 1;
        let next_obj = sum_capacity(ctx, &next);
        trace.push(next_obj);
        let change = (next_obj - obj).abs();
        let step = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        q = next;
        obj = next_obj;
        // The objective is flat near a fixed point, so it settles long before the powers do.
        if change <= cfg.tolerance * obj.abs().max(f64::MIN_POSITIVE) && step <= cfg.tolerance * ctx.max_power {
            converged = true;
            break;
        }
    }
    let residual = power_update_step(ctx, &q)
        .iter()
        .zip(&q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    PowerAllocation { powers: q, iterations, converged, objective_trace: trace, residual }
}

/// Per-transmitter first-order condition of the update's utility:
/// `Σ s/(1+s) − Q_k · Σ s/(1+s)² g/I`, normalised by the first sum. Zero in
/// the interior at a fixed point; non-negative at `Q_max`; trivially zero at
/// `Q = 0`.
pub fn stationarity(ctx: &ScheduleContext<'_>, q: &[f64]) -> Vec<f64> {
    let links = ctx.link_state(q);
    (0..q.len())
        .map(|a| {
            let (num, den) = ctx.update_terms(&links, a);
            if num > 0.0 {
                (num - q[a] * den) / num
            } else {
                0.0
            }
        })
        .collect()
}
