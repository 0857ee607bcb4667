use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Sample};

pub const CI_METHOD: &str = "normal approximation, 95%";
const Z95: f64 = 1.959_963_984_540_054;

/// Statistics of one scheme at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub scheme: String,
    /// Mean completion time over the runs that finished.
    pub mean: Option<f64>,
    /// Sample standard deviation; undefined with fewer than two runs.
    pub std: Option<f64>,
    /// Half-width of the 95% interval around `mean`.
    pub ci95: Option<f64>,
    pub slots_mean: Option<f64>,
    pub transmitters_per_slot_mean: Option<f64>,
    pub stall_count: usize,
    pub samples: Vec<Sample>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Sample standard deviation, `None` below two values.
pub fn sample_std(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

/// Normal-approximation 95% half-width.
pub fn ci95_half_width(xs: &[f64]) -> Option<f64> {
    sample_std(xs).map(|s| Z95 * s / (xs.len() as f64).sqrt())
}

impl PointSummary {
    pub fn from_samples(variable: &str, value: f64, scheme: &str, samples: Vec<Sample>) -> Self {
        let done: Vec<&Sample> = samples.iter().filter(|s| s.completion_time.is_some()).collect();
        let times: Vec<f64> = done.iter().filter_map(|s| s.completion_time).collect();
        let slots: Vec<f64> = done.iter().map(|s| s.slots as f64).collect();
        let tps: Vec<f64> = done.iter().map(|s| s.transmitters_per_slot).collect();
        Self {
            sweep_variable: variable.to_string(),
            sweep_value: value,
            scheme: scheme.to_string(),
            mean: mean(&times),
            std: sample_std(&times),
            ci95: ci95_half_width(&times),
            slots_mean: mean(&slots),
            transmitters_per_slot_mean: mean(&tps),
            stall_count: samples.len() - done.len(),
            samples,
        }
    }

    /// Completion times in realization order, `None` for stalls.
    pub fn values(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.completion_time).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub ci_method: String,
    pub points: Vec<PointSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "sweep_variable",
    "sweep_value",
    "scheme",
    "mean_T",
    "std_T",
    "ci95",
    "slots_mean",
    "transmitters_per_slot_mean",
    "stall_count",
];

// `Display` for f64 is locale-free and round-trips.
fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl AggregateReport {
    pub fn total_stalls(&self) -> usize {
        self.points.iter().map(|p| p.stall_count).sum()
    }

    pub fn point(&self, scheme: &str, sweep_value: f64) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.scheme == scheme && p.sweep_value == sweep_value)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for p in &self.points {
            w.write_record([
                p.sweep_variable.clone(),
                p.sweep_value.to_string(),
                p.scheme.clone(),
                num(p.mean),
                num(p.std),
                num(p.ci95),
                num(p.slots_mean),
                num(p.transmitters_per_slot_mean),
                p.stall_count.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Writes the report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(report: &AggregateReport, format: OutputFormat, path: Option<&Path>) -> Result<(), HarnessError> {
    let text = report.render(format);
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes()).map_err(|e| HarnessError::Io(e.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(r: usize, t: Option<f64>) -> Sample {
        Sample { realization: r, seed: r as u64, completion_time: t, slots: 3, transmitters_per_slot: 1.5, error: None }
    }

    fn report() -> AggregateReport {
        let mut points = Vec::new();
        for v in [10.0, 15.0, 20.0] {
            for s in ["clnc", "rlnc"] {
                points.push(PointSummary::from_samples("users", v, s, vec![sample(0, Some(1.25)), sample(1, Some(2.5)), sample(2, None)]));
            }
        }
        AggregateReport { ci_method: CI_METHOD.into(), points }
    }

    #[test]
    fn csv_has_one_row_per_scheme_and_point() {
        let csv = report().to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert!(lines[1].starts_with("users,10,clnc,1.875,"), "{}", lines[1]);
        assert!(lines[1].ends_with(",3,1.5,1"));
    }

    #[test]
    fn json_round_trips() {
        let r = report();
        assert_eq!(AggregateReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn statistics() {
        let p = &report().points[0];
        assert_eq!(p.mean, Some(1.875));
        let s = (2.0f64 * 0.625 * 0.625).sqrt();
        assert!((p.std.unwrap() - s).abs() < 1e-15);
        assert!((p.ci95.unwrap() - Z95 * s / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.stall_count, 1);
        assert_eq!(p.values(), vec![Some(1.25), Some(2.5), None]);
        assert_eq!(sample_std(&[3.0]), None);
    }
}
