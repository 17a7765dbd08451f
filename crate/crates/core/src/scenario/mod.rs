//! Scenario specifications, the batch runner with trial averaging, and the
//! financial metric.

mod catalog;
mod export;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{AdmmConfig, AdmmError, AdmmRun, AdmmState, Injection, InjectionContext, InjectionPlan, Side, Trace};
use crate::attacks::{
    evasion_criterion, goal_oriented, naive_percent, random_evasive, replay_vector, AttackError, AttackFamily, AttackVector,
    GapVector, GoalOptions, Support,
};
use crate::monitors::{monitor_run, DetectionReport, DetectorConfig, MonitorError, RunSummary};
use crate::network::{ieee14_split, BoundaryVector, Component, NetworkCase, NetworkError, RegionModel, STUDY_VMAX, STUDY_VMIN};

pub use catalog::{
    builtin, builtin_catalog, reference_replay, reference_vectors, BLOCK_ITERATIONS, GOAL_V_U, PROPOSITION1_TRIALS,
    REFERENCE_VECTORS, TARGET_BUS,
};
pub use export::{export, load_summary, summarize, trace_file_name, ExportOptions, ScenarioSummary, Summary, TrialRow};

pub const DEFAULT_BASE_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario {id}: {message}")]
    Validation { id: u32, message: String },
    #[error(transparent)]
    Admm(#[from] AdmmError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Attack family and its parameters. `clean` carries no attack fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    Clean,
    Naive { side: Side, iteration: usize, targets: Vec<usize>, percent: BTreeMap<Component, f64> },
    Proposition1 { side: Side, iteration: usize, targets: Vec<usize> },
    GoalOriented { side: Side, iteration: usize, targets: Vec<usize>, v_u: f64 },
    Replay { side: Side, iteration: usize, targets: Vec<usize>, vector: Vec<f64> },
}

impl AttackSpec {
    pub fn family(&self) -> &'static str {
        match self {
            AttackSpec::Clean => "clean",
            AttackSpec::Naive { .. } => "naive",
            AttackSpec::Proposition1 { .. } => "proposition1",
            AttackSpec::GoalOriented { .. } => "goal_oriented",
            AttackSpec::Replay { .. } => "replay",
        }
    }

    /// `(side, iteration, targets)` of an attack; `None` when clean.
    pub fn placement(&self) -> Option<(Side, usize, &[usize])> {
        match self {
            AttackSpec::Clean => None,
            AttackSpec::Naive { side, iteration, targets, .. }
            | AttackSpec::Proposition1 { side, iteration, targets }
            | AttackSpec::GoalOriented { side, iteration, targets, .. }
            | AttackSpec::Replay { side, iteration, targets, .. } => Some((*side, *iteration, targets)),
        }
    }

    /// Whether the family is designed to satisfy the evasion criterion.
    pub fn is_evasive(&self) -> bool {
        matches!(self, AttackSpec::Proposition1 { .. } | AttackSpec::GoalOriented { .. })
    }
}

fn default_trials() -> usize {
    1
}

fn default_seed() -> u64 {
    DEFAULT_BASE_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ScenarioSpec {
    pub id: u32,
    #[serde(flatten)]
    pub attack: AttackSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FamilyTag {
    Clean,
    Naive,
    Proposition1,
    GoalOriented,
    Replay,
}

/// Flat wire form of a spec. Flattened internally tagged enums cannot reject
/// unknown fields, so every field is read here and checked per family.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    id: u32,
    family: FamilyTag,
    side: Option<Side>,
    iteration: Option<usize>,
    targets: Option<Vec<usize>>,
    percent: Option<BTreeMap<Component, f64>>,
    v_u: Option<f64>,
    vector: Option<Vec<f64>>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_seed")]
    base_seed: u64,
}

impl TryFrom<RawSpec> for ScenarioSpec {
    type Error = String;

    fn try_from(raw: RawSpec) -> Result<Self, String> {
        let present = [
            ("side", raw.side.is_some()),
            ("iteration", raw.iteration.is_some()),
            ("targets", raw.targets.is_some()),
            ("percent", raw.percent.is_some()),
            ("v_u", raw.v_u.is_some()),
            ("vector", raw.vector.is_some()),
        ];
        let allowed: &[&str] = match raw.family {
            FamilyTag::Clean => &[],
            FamilyTag::Naive => &["side", "iteration", "targets", "percent"],
            FamilyTag::Proposition1 => &["side", "iteration", "targets"],
            FamilyTag::GoalOriented => &["side", "iteration", "targets", "v_u"],
            FamilyTag::Replay => &["side", "iteration", "targets", "vector"],
        };
        if let Some((name, _)) = present.iter().find(|(n, p)| *p && !allowed.contains(n)) {
            return Err(format!("scenario {}: field `{name}` does not apply to this family", raw.id));
        }
        if let Some((name, _)) = present.iter().find(|(n, p)| !*p && allowed.contains(n)) {
            return Err(format!("scenario {}: missing field `{name}`", raw.id));
        }
        let (side, iteration, targets) = (raw.side.unwrap_or(Side::Z), raw.iteration.unwrap_or(0), raw.targets.unwrap_or_default());
        let attack = match raw.family {
            FamilyTag::Clean => AttackSpec::Clean,
            FamilyTag::Naive => AttackSpec::Naive { side, iteration, targets, percent: raw.percent.unwrap_or_default() },
            FamilyTag::Proposition1 => AttackSpec::Proposition1 { side, iteration, targets },
            FamilyTag::GoalOriented => AttackSpec::GoalOriented { side, iteration, targets, v_u: raw.v_u.unwrap_or(f64::NAN) },
            FamilyTag::Replay => AttackSpec::Replay { side, iteration, targets, vector: raw.vector.unwrap_or_default() },
        };
        Ok(ScenarioSpec { id: raw.id, attack, trials: raw.trials, base_seed: raw.base_seed })
    }
}

impl ScenarioSpec {
    pub fn validate(&self, boundary_ids: &[usize]) -> Result<(), ScenarioError> {
        let fail = |message: String| Err(ScenarioError::Validation { id: self.id, message });
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        let Some((_, iteration, targets)) = self.attack.placement() else {
            return Ok(());
        };
        if iteration == 0 {
            return fail("attack iteration must be at least 1".into());
        }
        if targets.is_empty() {
            return fail("no target buses".into());
        }
        if let Some(bus) = targets.iter().find(|b| !boundary_ids.contains(b)) {
            return fail(format!("bus {bus} is not a boundary bus (boundary: {boundary_ids:?})"));
        }
        let mut sorted = targets.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != targets.len() {
            return fail("duplicate target buses".into());
        }
        match &self.attack {
            AttackSpec::Naive { percent, .. } if percent.is_empty() => fail("naive attack without percentages".into()),
            AttackSpec::Naive { percent, .. } if percent.values().any(|p| !p.is_finite()) => {
                fail("non-finite percentage".into())
            }
            AttackSpec::GoalOriented { v_u, .. } if !v_u.is_finite() => fail("non-finite v_u".into()),
            AttackSpec::Replay { vector, targets, .. } if vector.len() != 4 * targets.len() => fail(format!(
                "replay vector has {} entries, expected {}",
                vector.len(),
                4 * targets.len()
            )),
            AttackSpec::Replay { vector, .. } if vector.iter().any(|v| !v.is_finite()) => {
                fail("non-finite replay entry".into())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match &self.attack {
            AttackSpec::Clean => "clean".into(),
            AttackSpec::Naive { side, iteration, percent, .. } => {
                let parts: Vec<String> = percent.iter().map(|(c, p)| format!("{p:+}% {}", c.label())).collect();
                format!("naive {} @{iteration} on {}", parts.join(", "), side_name(*side))
            }
            other => {
                let (side, iteration, _) = other.placement().expect("attack");
                format!("{} @{iteration} on {}", other.family(), side_name(side))
            }
        }
    }
}

pub fn side_name(side: Side) -> &'static str {
    match side {
        Side::X => "x",
        Side::Z => "z",
    }
}

/// The attack actually injected in a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedAttack {
    pub iteration: usize,
    pub side: Side,
    pub family: AttackFamily,
    pub values: Vec<f64>,
    pub gap_norm: f64,
    /// `a^T (a - 2y)` over the attack's support, with `y` the gap seen by
    /// the attacked side.
    pub criterion_value: f64,
    pub criterion_satisfied: bool,
    pub r_attacked: f64,
    pub r_clean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub trace: Trace,
    pub report: DetectionReport,
    pub attack: Option<AppliedAttack>,
    /// Why no attack was injected, when one was planned.
    pub attack_error: Option<String>,
    pub financial: f64,
}

impl TrialResult {
    pub fn status(&self) -> &'static str {
        self.trace.termination.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub financial_mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub financial_std: f64,
    pub financial_min: f64,
    pub financial_max: f64,
    pub status_counts: BTreeMap<String, usize>,
    pub iterations_mean: f64,
    pub iterations_min: usize,
    pub iterations_max: usize,
    pub time_mean_ms: f64,
    pub attacked_trials: usize,
    pub primal_flagged_trials: usize,
    pub dual_flagged_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Total absolute reactive power over the boundary buses.
pub fn boundary_q_total(v: &BoundaryVector) -> f64 {
    (0..v.bus_count()).map(|pos| v.get(pos, Component::Q).abs()).sum()
}

/// Financial metric of a trace: boundary `sum |q|` of the final TSO iterate.
pub fn trace_financial(trace: &Trace) -> f64 {
    trace.last().map_or(f64::NAN, |r| boundary_q_total(&r.x))
}

/// Per-trial financial metric and its mean.
pub fn financial_metric(result: &ScenarioResult) -> (Vec<f64>, f64) {
    let per: Vec<f64> = result.trials.iter().map(|t| t.financial).collect();
    let mean = mean_std(&per).0;
    (per, mean)
}

fn aggregate(trials: &[TrialResult]) -> Aggregate {
    let fin: Vec<f64> = trials.iter().map(|t| t.financial).collect();
    let (financial_mean, financial_std) = mean_std(&fin);
    let its: Vec<usize> = trials.iter().map(|t| t.trace.iterations()).collect();
    let mut status_counts = BTreeMap::new();
    for t in trials {
        *status_counts.entry(t.status().to_string()).or_insert(0) += 1;
    }
    let flagged = |ch| trials.iter().filter(|t| !t.report.flagged(ch).is_empty()).count();
    Aggregate {
        financial_mean,
        financial_std,
        financial_min: fin.iter().copied().fold(f64::INFINITY, f64::min),
        financial_max: fin.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        status_counts,
        iterations_mean: its.iter().sum::<usize>() as f64 / its.len() as f64,
        iterations_min: its.iter().copied().min().unwrap_or(0),
        iterations_max: its.iter().copied().max().unwrap_or(0),
        time_mean_ms: trials.iter().map(|t| t.trace.total_time_ms()).sum::<f64>() / trials.len() as f64,
        attacked_trials: trials.iter().filter(|t| t.attack.is_some()).count(),
        primal_flagged_trials: flagged(crate::monitors::Channel::Primal),
        dual_flagged_trials: flagged(crate::monitors::Channel::Dual),
    }
}

/// A case split into regions, its clean run and the state after every clean
/// iteration. Attacked trials resume from the clean state just before the
/// attack, which is exactly where a fresh run would be.
#[derive(Debug, Clone)]
pub struct Study {
    pub case: NetworkCase,
    pub tso: RegionModel,
    pub dso: RegionModel,
    pub config: AdmmConfig,
    pub detector: DetectorConfig,
    pub clean: Trace,
    states: Vec<AdmmState>,
}

impl Study {
    pub fn new(case: NetworkCase, config: AdmmConfig, detector: DetectorConfig) -> Result<Study, ScenarioError> {
        detector.validate()?;
        let (tso, dso) = ieee14_split(&case)?;
        let (clean, states) = {
            let mut run = AdmmRun::new(&tso, &dso, config)?;
            let mut states = vec![run.state().clone()];
            while !run.is_finished() {
                run.step(&mut crate::admm::NoInjection)?;
                states.push(run.state().clone());
            }
            (run.into_trace(), states)
        };
        Ok(Study { case, tso, dso, config, detector, clean, states })
    }

    pub fn boundary_ids(&self) -> Vec<usize> {
        self.tso.boundary_ids()
    }

    /// Clean ADMM state at the start of iteration `k` (1-based).
    pub fn state_before(&self, k: usize) -> Option<&AdmmState> {
        k.checked_sub(1).and_then(|i| self.states.get(i))
    }

    pub fn clean_financial(&self) -> f64 {
        trace_financial(&self.clean)
    }

    /// Runs every trial of a scenario, in parallel, ordered by trial index.
    pub fn run(&self, spec: &ScenarioSpec) -> Result<ScenarioResult, ScenarioError> {
        spec.validate(&self.boundary_ids())?;
        let trials = (0..spec.trials)
            .into_par_iter()
            .map(|t| self.run_trial(spec, t))
            .collect::<Result<Vec<_>, _>>()?;
        let aggregate = aggregate(&trials);
        Ok(ScenarioResult { spec: spec.clone(), trials, aggregate })
    }

    /// Runs many scenarios; results keep the input order.
    pub fn run_all(&self, specs: &[ScenarioSpec]) -> Result<Vec<ScenarioResult>, ScenarioError> {
        for s in specs {
            s.validate(&self.boundary_ids())?;
        }
        specs.par_iter().map(|s| self.run(s)).collect()
    }

    pub fn run_trial(&self, spec: &ScenarioSpec, trial: usize) -> Result<TrialResult, ScenarioError> {
        let seed = spec.base_seed.wrapping_add(trial as u64);
        let (trace, attack, attack_error) = match spec.attack.placement() {
            None => (self.clean.clone(), None, None),
            Some((_, k, _)) if k > self.clean.iterations() => (
                self.clean.clone(),
                None,
                Some(format!("run terminated at iteration {} before attack iteration {k}", self.clean.iterations())),
            ),
            Some((_, k, _)) => {
                let mut run = AdmmRun::resume(
                    &self.tso,
                    &self.dso,
                    self.config,
                    self.states[k - 1].clone(),
                    self.clean.records[..k - 1].to_vec(),
                )?;
                let mut plan = ScenarioPlan::new(spec, seed, self.boundary_ids());
                run.run_to_end(&mut plan)?;
                let trace = run.into_trace();
                let applied = plan.applied.map(|mut a| {
                    if let Some(rec) = trace.record(k) {
                        a.r_attacked = rec.r;
                        a.r_clean = rec.r_clean;
                    }
                    a
                });
                (trace, applied, plan.error)
            }
        };
        let report = match monitor_run(&trace, Some(&self.clean), &self.tso, &self.dso, &self.detector, (STUDY_VMIN, STUDY_VMAX)) {
            Ok(r) => r,
            Err(MonitorError::TooShort { .. }) => DetectionReport {
                flags: Vec::new(),
                summary: RunSummary { iterations: trace.iterations(), wall_time_ms: trace.total_time_ms(), ..Default::default() },
            },
            Err(e) => return Err(e.into()),
        };
        let financial = trace_financial(&trace);
        Ok(TrialResult { trial, seed, trace, report, attack, attack_error, financial })
    }
}

/// Builds a study on the built-in case and runs one scenario.
pub fn run_scenario(spec: &ScenarioSpec, case: NetworkCase, config: AdmmConfig) -> Result<ScenarioResult, ScenarioError> {
    spec.validate(&[4, 5])?;
    Study::new(case, config, DetectorConfig::default())?.run(spec)
}

/// Reads user scenarios from a JSON array of specs.
pub fn parse_scenarios(json: &str) -> Result<Vec<ScenarioSpec>, serde_json::Error> {
    serde_json::from_str(json)
}

/// Injects the scenario's attack once, at its iteration and side. A failed
/// construction is recorded and the run continues unattacked.
struct ScenarioPlan<'s> {
    spec: &'s ScenarioSpec,
    rng: ChaCha8Rng,
    seed: u64,
    boundary_ids: Vec<usize>,
    applied: Option<AppliedAttack>,
    error: Option<String>,
}

impl<'s> ScenarioPlan<'s> {
    fn new(spec: &'s ScenarioSpec, seed: u64, boundary_ids: Vec<usize>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::from(spec.id));
        ScenarioPlan { spec, rng, seed, boundary_ids, applied: None, error: None }
    }

    fn build(&mut self, own: &BoundaryVector, other: &BoundaryVector) -> Result<(AttackVector, GapVector), AttackError> {
        let (_, _, targets) = self.spec.attack.placement().expect("attack scenario");
        let ids = &self.boundary_ids;
        let support = Support::buses(ids, targets, &Component::ALL)?;
        let gap = GapVector::between(other, own, support)?;
        let attack = match &self.spec.attack {
            AttackSpec::Clean => unreachable!("clean scenarios inject nothing"),
            AttackSpec::Naive { percent, .. } => {
                let mut total = AttackVector::zero(own.len(), AttackFamily::Naive);
                for &bus in targets {
                    for (&c, &p) in percent {
                        total = total.combine(&naive_percent(own, ids, bus, c, p)?)?;
                    }
                }
                total
            }
            AttackSpec::Proposition1 { .. } => random_evasive(&gap, &mut self.rng)?,
            AttackSpec::GoalOriented { v_u, .. } => {
                let opts = GoalOptions { seed: self.seed, ..GoalOptions::default() };
                goal_oriented(own, &gap, ids, targets, *v_u, None, &opts)?.attack
            }
            AttackSpec::Replay { vector, .. } => {
                let mut total = AttackVector::zero(own.len(), AttackFamily::Replay);
                for (i, &bus) in targets.iter().enumerate() {
                    total = total.combine(&replay_vector(&vector[4 * i..4 * i + 4], ids, bus)?)?;
                }
                total
            }
        };
        Ok((attack.with_scenario(self.spec.id), gap))
    }
}

impl InjectionPlan for ScenarioPlan<'_> {
    fn inject(&mut self, ctx: &InjectionContext<'_>) -> Result<Option<Injection>, String> {
        let Some((side, k, _)) = self.spec.attack.placement() else {
            return Ok(None);
        };
        if ctx.iteration != k || ctx.side != side || self.applied.is_some() || self.error.is_some() {
            return Ok(None);
        }
        let (own, other) = match side {
            Side::X => (ctx.x, ctx.z),
            Side::Z => (ctx.z, ctx.x),
        };
        match self.build(own, other) {
            Ok((attack, gap)) => {
                let crit = evasion_criterion(&attack, &gap).map_err(|e| e.to_string())?;
                self.applied = Some(AppliedAttack {
                    iteration: k,
                    side,
                    family: attack.family,
                    values: attack.values.clone(),
                    gap_norm: gap.norm(),
                    criterion_value: crit.value,
                    criterion_satisfied: crit.satisfied,
                    r_attacked: f64::NAN,
                    r_clean: f64::NAN,
                });
                Ok(Some(Injection { id: format!("scenario_{:03}", self.spec.id), delta: attack.to_boundary() }))
            }
            Err(e) => {
                self.error = Some(e.to_string());
                Ok(None)
            }
        }
    }
}
