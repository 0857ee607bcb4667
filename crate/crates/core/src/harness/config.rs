use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::channel::RadioParams;
use crate::graph::RateMode;
use crate::power::PowerConfig;
use crate::scheduler::{SchedulerConfig, SchedulerKind};
use crate::state::CachePlacement;

/// The quantity a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Users,
    Files,
    FileSize,
    DemandRatio,
    RateThreshold,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Users => "users",
            SweepVariable::Files => "files",
            SweepVariable::FileSize => "file_size",
            SweepVariable::DemandRatio => "demand_ratio",
            SweepVariable::RateThreshold => "rate_threshold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// A full experiment description. Every field has a default, so an empty
/// document is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub users: usize,
    pub files: usize,
    /// Bits per file.
    pub file_size: f64,
    /// Circumradius of the hexagonal cell in meters.
    pub cell_radius: f64,
    pub shadowing_db: f64,
    pub cache_fraction: [f64; 2],
    /// When set, replaces `cache_fraction`.
    pub demand_ratio: Option<f64>,
    /// In bits/s/Hz. Rate-aware schemes run once per entry.
    pub rate_thresholds: Vec<f64>,
    /// Optional explicit rate ladder in bits/s/Hz.
    pub rate_ladder: Option<Vec<f64>>,
    pub noise_dbm_per_hz: f64,
    pub max_power_dbm_per_hz: f64,
    pub bandwidth_hz: f64,
    pub schemes: Vec<String>,
    pub realizations: usize,
    pub seed: u64,
    pub fading_per_slot: bool,
    pub slot_cap: usize,
    /// Carry random payloads and check every decode byte for byte.
    pub payloads: bool,
    /// Stalled realizations tolerated before the command-line tool reports failure.
    pub max_stalls: usize,
    pub power: PowerConfig,
    pub sweep: Option<SweepConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            users: 20,
            files: 20,
            file_size: 1.0e6,
            cell_radius: 500.0,
            shadowing_db: 4.0,
            cache_fraction: [0.45, 0.55],
            demand_ratio: None,
            rate_thresholds: vec![0.5],
            rate_ladder: None,
            noise_dbm_per_hz: -174.0,
            max_power_dbm_per_hz: -42.6,
            bandwidth_hz: 1.0e6,
            schemes: SchedulerKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            realizations: 200,
            seed: 1,
            fading_per_slot: true,
            slot_cap: 10_000,
            payloads: false,
            max_stalls: 0,
            power: PowerConfig::default(),
            sweep: None,
        }
    }
}

fn invalid(field: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Invalid { field: field.to_string(), message: msg.into() }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.users < 2 {
            return Err(invalid("users", "need at least 2 devices"));
        }
        if self.files < 1 {
            return Err(invalid("files", "need at least 1 file"));
        }
        if !(self.file_size >= 1.0 && self.file_size.is_finite()) {
            return Err(invalid("file_size", "must be at least 1 bit"));
        }
        if !(self.cell_radius > 0.0 && self.cell_radius.is_finite()) {
            return Err(invalid("cell_radius", "must be positive"));
        }
        if !(self.shadowing_db >= 0.0) {
            return Err(invalid("shadowing_db", "must be non-negative"));
        }
        let [lo, hi] = self.cache_fraction;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(invalid("cache_fraction", "need 0 < lo <= hi < 1"));
        }
        if let Some(mu) = self.demand_ratio {
            if !(mu > 0.0 && mu < 1.0) {
                return Err(invalid("demand_ratio", format!("{mu} is not strictly between 0 and 1")));
            }
        }
        if self.rate_thresholds.is_empty() || self.rate_thresholds.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(invalid("rate_thresholds", "need at least one finite non-negative threshold"));
        }
        if let Some(l) = &self.rate_ladder {
            if l.is_empty() || l.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return Err(invalid("rate_ladder", "rates must be positive and finite"));
            }
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(invalid("bandwidth_hz", "must be positive"));
        }
        if !self.noise_dbm_per_hz.is_finite() || !self.max_power_dbm_per_hz.is_finite() {
            return Err(invalid("noise_dbm_per_hz", "power densities must be finite"));
        }
        if self.schemes.is_empty() {
            return Err(invalid("schemes", "list at least one scheme"));
        }
        for s in &self.schemes {
            s.parse::<SchedulerKind>().map_err(|e| invalid("schemes", e.to_string()))?;
        }
        if self.realizations < 1 {
            return Err(invalid("realizations", "need at least 1"));
        }
        if self.slot_cap < 1 {
            return Err(invalid("slot_cap", "need at least 1"));
        }
        let p = &self.power;
        if !(p.tolerance > 0.0) || p.max_iterations < 1 || !(p.initial_fraction > 0.0 && p.initial_fraction <= 1.0) {
            return Err(invalid("power", "need tolerance > 0, max_iterations >= 1, 0 < initial_fraction <= 1"));
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(invalid("sweep.values", "list at least one value"));
            }
            for &v in &sw.values {
                let mut point = self.clone();
                point.sweep = None;
                point.apply(sw.variable, v);
                point.validate().map_err(|e| invalid("sweep.values", format!("value {v}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Sets the swept quantity to `value`.
    pub fn apply(&mut self, variable: SweepVariable, value: f64) {
        match variable {
            SweepVariable::Users => self.users = value as usize,
            SweepVariable::Files => self.files = value as usize,
            SweepVariable::FileSize => self.file_size = value,
            SweepVariable::DemandRatio => self.demand_ratio = Some(value),
            SweepVariable::RateThreshold => self.rate_thresholds = vec![value],
        }
    }

    /// `(variable name, value, config)` for every sweep point; one point
    /// labelled `none` without a sweep.
    pub fn points(&self) -> Vec<(String, f64, ScenarioConfig)> {
        match &self.sweep {
            None => vec![("none".to_string(), 0.0, self.clone())],
            Some(sw) => sw
                .values
                .iter()
                .map(|&v| {
                    let mut c = self.clone();
                    c.sweep = None;
                    c.apply(sw.variable, v);
                    (sw.variable.name().to_string(), v, c)
                })
                .collect(),
        }
    }

    pub fn kinds(&self) -> Vec<SchedulerKind> {
        self.schemes.iter().map(|s| s.parse().expect("validated")).collect()
    }

    pub fn radio(&self) -> RadioParams {
        RadioParams::from_densities(self.noise_dbm_per_hz, self.max_power_dbm_per_hz, self.bandwidth_hz)
    }

    pub fn placement(&self) -> CachePlacement {
        match self.demand_ratio {
            Some(mu) => CachePlacement::DemandRatio(mu),
            None => CachePlacement::Fraction { lo: self.cache_fraction[0], hi: self.cache_fraction[1] },
        }
    }

    pub fn scheduler(&self, rate_threshold: f64) -> SchedulerConfig {
        SchedulerConfig {
            rate_threshold,
            rate_mode: match &self.rate_ladder {
                Some(l) => RateMode::Ladder(l.clone()),
                None => RateMode::Capacities,
            },
            power: self.power,
            slot_cap: self.slot_cap,
            ..SchedulerConfig::default()
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text)
}
