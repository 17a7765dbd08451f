//! Defender-side checks over ADMM traces: residual spikes, voltage limits,
//! balancing errors against a baseline, and run statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::Trace;
use crate::network::RegionModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonitorError {
    #[error("trace has {found} records, needs at least {needed}")]
    TooShort { needed: usize, found: usize },
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error("traces do not describe the same case: {0}")]
    CaseMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Number of preceding iterations in the reference window.
    pub window: usize,
    /// Spike factor in window standard deviations.
    pub kappa: f64,
    /// First iteration that may be flagged.
    pub arm_at: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { window: 10, kappa: 4.0, arm_at: 3 }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), MonitorError> {
        if self.window < 2 {
            return Err(MonitorError::Config(format!("window must be at least 2, got {}", self.window)));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(MonitorError::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub iteration: usize,
    pub channel: Channel,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub wall_time_ms: f64,
    /// Largest `value / threshold` over armed iterations.
    pub max_spike_ratio: f64,
    pub voltage_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_balance_deviation: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub flags: Vec<Flag>,
    pub summary: RunSummary,
}

impl DetectionReport {
    pub fn flagged(&self, channel: Channel) -> Vec<usize> {
        self.flags.iter().filter(|f| f.channel == channel).map(|f| f.iteration).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}

/// Flags each `(iteration, value)` exceeding the mean plus `kappa` population
/// standard deviations of the up to `window` preceding values. Iterations
/// before `arm_at`, or with fewer than two preceding values, are not judged.
/// Returns the flags and the largest value-to-threshold ratio seen.
pub fn spike_flags(series: &[(usize, f64)], config: &DetectorConfig, channel: Channel) -> (Vec<Flag>, f64) {
    let mut flags = Vec::new();
    let mut max_ratio = 0.0f64;
    for (i, &(iteration, value)) in series.iter().enumerate() {
        if iteration < config.arm_at || i < 2 {
            continue;
        }
        let window = &series[i.saturating_sub(config.window)..i];
        let n = window.len() as f64;
        let mean = window.iter().map(|(_, v)| v).sum::<f64>() / n;
        let var = window.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / n;
        let threshold = mean + config.kappa * var.sqrt();
        if threshold > 0.0 {
            max_ratio = max_ratio.max(value / threshold);
        }
        if value > threshold {
            flags.push(Flag { iteration, channel, value, threshold });
        }
    }
    (flags, max_ratio)
}

pub fn residual_spike_detector(trace: &Trace, config: &DetectorConfig, channel: Channel) -> Result<DetectionReport, MonitorError> {
    config.validate()?;
    if trace.records.len() < config.window + 1 {
        return Err(MonitorError::TooShort { needed: config.window + 1, found: trace.records.len() });
    }
    let series: Vec<(usize, f64)> = trace
        .records
        .iter()
        .map(|r| (r.iteration, if channel == Channel::Primal { r.r } else { r.s }))
        .collect();
    let (flags, max_spike_ratio) = spike_flags(&series, config, channel);
    Ok(DetectionReport {
        flags,
        summary: RunSummary {
            iterations: trace.iterations(),
            wall_time_ms: trace.total_time_ms(),
            max_spike_ratio,
            ..Default::default()
        },
    })
}

/// Bus voltages of one iterate: `(bus id, V)`. Boundary buses appear once
/// per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageSnapshot {
    pub iteration: usize,
    pub buses: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageViolation {
    pub bus: usize,
    pub iteration: usize,
    pub v: f64,
}

pub fn voltage_bounds_check(snapshots: &[VoltageSnapshot], v_min: f64, v_max: f64) -> Vec<VoltageViolation> {
    snapshots
        .iter()
        .flat_map(|s| {
            s.buses
                .iter()
                .filter(|(_, v)| !(v_min..=v_max).contains(v))
                .map(move |&(bus, v)| VoltageViolation { bus, iteration: s.iteration, v })
        })
        .collect()
}

/// Region voltages at every recorded iterate.
pub fn trace_voltages(trace: &Trace, tso: &RegionModel, dso: &RegionModel) -> Vec<VoltageSnapshot> {
    trace
        .records
        .iter()
        .map(|r| VoltageSnapshot {
            iteration: r.iteration,
            buses: tso
                .buses
                .iter()
                .map(|b| b.id)
                .zip(r.tso_vm.iter().copied())
                .chain(dso.buses.iter().map(|b| b.id).zip(r.dso_vm.iter().copied()))
                .collect(),
        })
        .collect()
}

/// Voltages at the final iterate only.
pub fn final_voltages(trace: &Trace, tso: &RegionModel, dso: &RegionModel) -> Vec<VoltageSnapshot> {
    let mut all = trace_voltages(trace, tso, dso);
    all.drain(..all.len().saturating_sub(1));
    all
}

/// `|balance_attacked - balance_clean|` per iteration (rows) and bus
/// (columns). Iterations are aligned by index; the shorter trace is held at
/// its final record.
pub fn balancing_error_deviation(trace: &Trace, baseline: &Trace) -> Result<Vec<Vec<f64>>, MonitorError> {
    if trace.boundary_ids != baseline.boundary_ids {
        return Err(MonitorError::CaseMismatch("boundary buses differ".into()));
    }
    let (Some(last_a), Some(last_b)) = (trace.records.last(), baseline.records.last()) else {
        return Err(MonitorError::TooShort { needed: 1, found: 0 });
    };
    if last_a.balance.len() != last_b.balance.len() {
        return Err(MonitorError::CaseMismatch(format!(
            "{} vs {} buses",
            last_a.balance.len(),
            last_b.balance.len()
        )));
    }
    let n = trace.records.len().max(baseline.records.len());
    Ok((0..n)
        .map(|i| {
            let a = trace.records.get(i).unwrap_or(last_a);
            let b = baseline.records.get(i).unwrap_or(last_b);
            a.balance.iter().zip(&b.balance).map(|(x, y)| (x - y).abs()).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityStats {
    pub iterations: usize,
    pub total_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

pub fn stability_stats(times_ms: &[f64]) -> Result<StabilityStats, MonitorError> {
    if times_ms.is_empty() {
        return Err(MonitorError::TooShort { needed: 1, found: 0 });
    }
    let total: f64 = times_ms.iter().sum();
    Ok(StabilityStats {
        iterations: times_ms.len(),
        total_ms: total,
        mean_ms: total / times_ms.len() as f64,
        max_ms: times_ms.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn trace_stability(trace: &Trace) -> Result<StabilityStats, MonitorError> {
    let times: Vec<f64> = trace.records.iter().map(|r| r.time_ms).collect();
    stability_stats(&times)
}

/// Both residual channels, final-iterate voltage limits and, with a
/// baseline, the balancing-error deviation.
pub fn monitor_run(
    trace: &Trace,
    baseline: Option<&Trace>,
    tso: &RegionModel,
    dso: &RegionModel,
    config: &DetectorConfig,
    v_limits: (f64, f64),
) -> Result<DetectionReport, MonitorError> {
    let mut report = residual_spike_detector(trace, config, Channel::Primal)?;
    let dual = residual_spike_detector(trace, config, Channel::Dual)?;
    report.flags.extend(dual.flags);
    report.summary.voltage_violations = voltage_bounds_check(&final_voltages(trace, tso, dso), v_limits.0, v_limits.1).len();
    if let Some(base) = baseline {
        let dev = balancing_error_deviation(trace, base)?;
        report.summary.max_balance_deviation = Some(dev.iter().flatten().copied().fold(0.0, f64::max));
    }
    Ok(report)
}
