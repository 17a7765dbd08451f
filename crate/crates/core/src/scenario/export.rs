//! File exports: per-trial traces, `summary.json`, and plot-data CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Aggregate, AppliedAttack, ScenarioError, ScenarioResult, ScenarioSpec, Study, TrialResult};
use crate::admm::{trace_csv, AdmmConfig};
use crate::monitors::{balancing_error_deviation, final_voltages, trace_stability, Channel, DetectorConfig};
use crate::network::{Component, RegionModel};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Write measured wall times. Off, every time field is zero and the
    /// output depends only on the computation.
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub financial: f64,
    pub wall_time_ms: f64,
    pub primal_flags: Vec<usize>,
    pub dual_flags: Vec<usize>,
    pub max_spike_ratio: f64,
    pub voltage_violations: usize,
    pub max_balance_deviation: Option<f64>,
    pub attack: Option<AppliedAttack>,
    pub attack_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub id: u32,
    pub family: String,
    pub label: String,
    pub spec: ScenarioSpec,
    pub aggregate: Aggregate,
    pub trials: Vec<TrialRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub boundary_ids: Vec<usize>,
    pub config: AdmmConfig,
    pub detector: DetectorConfig,
    pub clean_iterations: usize,
    pub clean_financial: f64,
    pub scenarios: Vec<ScenarioSummary>,
}

pub fn trace_file_name(id: u32, trial: usize) -> String {
    if trial == 0 {
        format!("scenario_{id:03}_trace.csv")
    } else {
        format!("scenario_{id:03}_trial_{trial:02}_trace.csv")
    }
}

fn row(t: &TrialResult, timing: bool) -> TrialRow {
    TrialRow {
        trial: t.trial,
        seed: t.seed,
        status: t.status().to_string(),
        iterations: t.trace.iterations(),
        financial: t.financial,
        wall_time_ms: if timing { t.trace.total_time_ms() } else { 0.0 },
        primal_flags: t.report.flagged(Channel::Primal),
        dual_flags: t.report.flagged(Channel::Dual),
        max_spike_ratio: t.report.summary.max_spike_ratio,
        voltage_violations: t.report.summary.voltage_violations,
        max_balance_deviation: t.report.summary.max_balance_deviation,
        attack: t.attack.clone(),
        attack_error: t.attack_error.clone(),
    }
}

pub fn summarize(study: &Study, results: &[ScenarioResult], opts: ExportOptions) -> Summary {
    Summary {
        boundary_ids: study.boundary_ids(),
        config: study.config,
        detector: study.detector,
        clean_iterations: study.clean.iterations(),
        clean_financial: study.clean_financial(),
        scenarios: results
            .iter()
            .map(|r| {
                let mut aggregate = r.aggregate.clone();
                if !opts.timing {
                    aggregate.time_mean_ms = 0.0;
                }
                ScenarioSummary {
                    id: r.spec.id,
                    family: r.spec.attack.family().to_string(),
                    label: r.spec.label(),
                    spec: r.spec.clone(),
                    aggregate,
                    trials: r.trials.iter().map(|t| row(t, opts.timing)).collect(),
                }
            })
            .collect(),
    }
}

pub fn load_summary(path: &Path) -> Result<Summary, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| ScenarioError::Json { path: path.display().to_string(), source })
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<(), ScenarioError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    written.push(path);
    Ok(())
}

/// Bus labels in balance/voltage order: TSO buses then DSO buses.
fn bus_labels(tso: &RegionModel, dso: &RegionModel) -> Vec<(&'static str, usize)> {
    tso.buses.iter().map(|b| ("tso", b.id)).chain(dso.buses.iter().map(|b| ("dso", b.id))).collect()
}

/// Writes every export into `dir`, creating it if needed. Returns the paths
/// written, in a fixed order.
pub fn export(study: &Study, results: &[ScenarioResult], dir: &Path, opts: ExportOptions) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::Io { path: dir.display().to_string(), source })?;
    let mut written = Vec::new();
    for r in results {
        for t in &r.trials {
            write(dir, &trace_file_name(r.spec.id, t.trial), &trace_csv(&t.trace, opts.timing), &mut written)?;
        }
    }
    let summary = summarize(study, results, opts);
    let json = serde_json::to_string_pretty(&summary).expect("summary is plain data");
    write(dir, "summary.json", &json, &mut written)?;

    let ids = study.boundary_ids();
    let labels = bus_labels(&study.tso, &study.dso);
    let clean_v: Vec<f64> = final_voltages(&study.clean, &study.tso, &study.dso)
        .pop()
        .map(|s| s.buses.into_iter().map(|(_, v)| v).collect())
        .unwrap_or_default();

    let mut fig3 = String::from("scenario,family,side,iteration,trial,financial\n");
    let mut fig4 = String::from("scenario,trial,iter");
    for side in ["x", "z"] {
        for id in &ids {
            let _ = write!(fig4, ",{side}_q_{id}");
        }
    }
    fig4.push('\n');
    let mut fig5 = String::from("scenario,trial,iter,r,r_clean\n");
    let mut fig6 = String::from("scenario,trial,iter,r,r_clean\n");
    let mut fig7 = String::from("scenario,trial,total_ms,mean_ms,max_ms\n");
    let mut fig8 = String::from("scenario,trial,iterations,status\n");
    let mut fig9 = String::from("scenario,trial,iter,s\n");
    let mut fig10 = String::from("scenario,trial,region,bus,v_final,v_clean,deviation\n");
    let mut fig11 = String::from("scenario,trial,region,bus,max_deviation,final_deviation\n");

    for r in results {
        let id = r.spec.id;
        let (side, k) = r.spec.attack.placement().map_or(("-", 0), |(s, k, _)| (super::side_name(s), k));
        for t in &r.trials {
            let n = t.trial;
            let _ = writeln!(fig3, "{id},{},{side},{k},{n},{:e}", r.spec.attack.family(), t.financial);
            for rec in &t.trace.records {
                if n == 0 {
                    let _ = write!(fig4, "{id},{n},{}", rec.iteration);
                    for v in [&rec.x, &rec.z] {
                        for pos in 0..ids.len() {
                            let _ = write!(fig4, ",{:e}", v.get(pos, Component::Q));
                        }
                    }
                    fig4.push('\n');
                }
                if rec.iteration <= 10 {
                    let _ = writeln!(fig5, "{id},{n},{},{:e},{:e}", rec.iteration, rec.r, rec.r_clean);
                    let _ = writeln!(fig9, "{id},{n},{},{:e}", rec.iteration, rec.s);
                }
                if (140..=170).contains(&rec.iteration) {
                    let _ = writeln!(fig6, "{id},{n},{},{:e},{:e}", rec.iteration, rec.r, rec.r_clean);
                }
            }
            let st = trace_stability(&t.trace)?;
            let (total, mean, max) = if opts.timing { (st.total_ms, st.mean_ms, st.max_ms) } else { (0.0, 0.0, 0.0) };
            let _ = writeln!(fig7, "{id},{n},{total:e},{mean:e},{max:e}");
            let _ = writeln!(fig8, "{id},{n},{},{}", st.iterations, t.status());
            if let Some(snap) = final_voltages(&t.trace, &study.tso, &study.dso).pop() {
                for (((region, bus), (_, v)), vc) in labels.iter().zip(&snap.buses).zip(&clean_v) {
                    let _ = writeln!(fig10, "{id},{n},{region},{bus},{v:e},{vc:e},{:e}", v - vc);
                }
            }
            let dev = balancing_error_deviation(&t.trace, &study.clean)?;
            if let Some(last) = dev.last() {
                for (j, (region, bus)) in labels.iter().enumerate() {
                    let max = dev.iter().map(|row| row[j]).fold(0.0, f64::max);
                    let _ = writeln!(fig11, "{id},{n},{region},{bus},{max:e},{:e}", last[j]);
                }
            }
        }
    }
    for (name, body) in [
        ("fig03_financial.csv", fig3),
        ("fig04_boundary_q.csv", fig4),
        ("fig05_primal_early.csv", fig5),
        ("fig06_primal_late.csv", fig6),
        ("fig07_time.csv", fig7),
        ("fig08_iterations.csv", fig8),
        ("fig09_dual_early.csv", fig9),
        ("fig10_voltage_deviation.csv", fig10),
        ("fig11_balance_deviation.csv", fig11),
    ] {
        write(dir, name, &body, &mut written)?;
    }
    Ok(written)
}
