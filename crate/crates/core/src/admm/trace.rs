use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AdmmState;
use crate::network::{BoundaryVector, Component, RegionKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Primal residual on the published (possibly attacked) values.
    pub r: f64,
    pub s: f64,
    /// Primal residual this iteration would have had without injection.
    pub r_clean: f64,
    pub x: BoundaryVector,
    pub z: BoundaryVector,
    /// Dual after this iteration's update.
    pub lambda: BoundaryVector,
    pub attack: Option<String>,
    pub time_ms: f64,
    pub tso_vm: Vec<f64>,
    pub dso_vm: Vec<f64>,
    /// Per-bus balance residual magnitude of the observed state, TSO buses
    /// first, then DSO buses, in region order.
    pub balance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIter,
    Diverged { iteration: usize, region: RegionKind, reason: String },
    /// The run was stopped before reaching a stopping rule.
    Incomplete,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::MaxIter => "max_iter",
            Termination::Diverged { .. } => "diverged",
            Termination::Incomplete => "incomplete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub boundary_ids: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub final_state: AdmmState,
}

impl Trace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn record(&self, iteration: usize) -> Option<&IterationRecord> {
        iteration.checked_sub(1).and_then(|i| self.records.get(i)).filter(|r| r.iteration == iteration)
    }

    pub fn total_time_ms(&self) -> f64 {
        self.records.iter().map(|r| r.time_ms).sum()
    }
}

pub fn trace_csv_header(boundary_ids: &[usize]) -> String {
    let mut cols = vec!["iter".to_string(), "r".into(), "s".into(), "time_ms".into()];
    for side in ["x", "z"] {
        for id in boundary_ids {
            for c in Component::ALL {
                cols.push(format!("{side}_{}_{id}", c.label()));
            }
        }
    }
    cols.join(",")
}

/// Renders the trace as CSV. With `with_time = false` the time column is
/// written as zero so the output depends only on the computation.
pub fn trace_csv(trace: &Trace, with_time: bool) -> String {
    let mut out = trace_csv_header(&trace.boundary_ids);
    out.push('\n');
    for rec in &trace.records {
        let time = if with_time { rec.time_ms } else { 0.0 };
        let _ = write!(out, "{},{:e},{:e},{}", rec.iteration, rec.r, rec.s, time);
        for v in rec.x.as_slice().iter().chain(rec.z.as_slice()) {
            let _ = write!(out, ",{v:e}");
        }
        out.push('\n');
    }
    out
}
