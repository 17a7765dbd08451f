//! Two-region consensus ADMM (A = I, B = -I, c = 0) with injection hooks.
//!
//! Each iteration runs, in order: the TSO x-update, an optional injection on
//! x, the DSO z-update, an optional injection on z, the residuals on the
//! (possibly attacked) shared values, and `lambda += x - z`.

mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{BoundaryVector, Component, NetworkError, RegionKind, RegionModel};
use crate::opf::{power_flow_mismatch, solve_local_subproblem, LocalSolution, OpfError, SolverOptions, SubproblemSpec};

pub use trace::{trace_csv, trace_csv_header, IterationRecord, Termination, Trace};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("regions do not come from one partition: {0}")]
    Regions(String),
    #[error("injection at iteration {iteration}: {message}")]
    Injection { iteration: usize, message: String },
}

impl From<NetworkError> for AdmmError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Dimension { expected, found } => AdmmError::Dimension { expected, found },
            other => AdmmError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub primal_tol: f64,
    pub dual_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig { rho: 100.0, primal_tol: 1e-4, dual_tol: 1e-4, max_iter: 2000, seed: 42, solver: SolverOptions::default() }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<(), AdmmError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(AdmmError::Config(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.primal_tol > 0.0 && self.dual_tol > 0.0) {
            return Err(AdmmError::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(AdmmError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Euclidean norm of `x - z`.
pub fn primal_residual(x: &BoundaryVector, z: &BoundaryVector) -> Result<f64, AdmmError> {
    Ok(x.sub(z)?.norm())
}

/// `rho * ||z - z_prev||`.
pub fn dual_residual(z: &BoundaryVector, z_prev: &BoundaryVector, rho: f64) -> Result<f64, AdmmError> {
    Ok(rho * z.sub(z_prev)?.norm())
}

/// Which shared vector an injection modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    Z,
}

/// What an injection hook sees: the iteration, the side about to be
/// published, and the shared values at that moment.
#[derive(Debug)]
pub struct InjectionContext<'a> {
    pub iteration: usize,
    pub side: Side,
    /// TSO value; already updated this iteration.
    pub x: &'a BoundaryVector,
    /// DSO value; for `Side::X` this is still the previous iteration's.
    pub z: &'a BoundaryVector,
    pub lambda: &'a BoundaryVector,
    pub history: &'a [IterationRecord],
}

/// A perturbation to add to the shared vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub id: String,
    pub delta: BoundaryVector,
}

/// Source of injections for a run. Returning `Ok(None)` leaves the value
/// untouched; an error aborts the run.
pub trait InjectionPlan {
    fn inject(&mut self, ctx: &InjectionContext<'_>) -> Result<Option<Injection>, String>;
}

/// No injections.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoInjection;

impl InjectionPlan for NoInjection {
    fn inject(&mut self, _ctx: &InjectionContext<'_>) -> Result<Option<Injection>, String> {
        Ok(None)
    }
}

/// Fixed perturbations keyed by (iteration, side).
#[derive(Debug, Clone, Default)]
pub struct FixedInjections {
    pub entries: Vec<(usize, Side, Injection)>,
}

impl InjectionPlan for FixedInjections {
    fn inject(&mut self, ctx: &InjectionContext<'_>) -> Result<Option<Injection>, String> {
        Ok(self
            .entries
            .iter()
            .find(|(k, side, _)| *k == ctx.iteration && *side == ctx.side)
            .map(|(_, _, inj)| inj.clone()))
    }
}

impl<F> InjectionPlan for F
where
    F: FnMut(&InjectionContext<'_>) -> Result<Option<Injection>, String>,
{
    fn inject(&mut self, ctx: &InjectionContext<'_>) -> Result<Option<Injection>, String> {
        self(ctx)
    }
}

/// Complete iterate after `iteration` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub iteration: usize,
    pub x: BoundaryVector,
    pub z: BoundaryVector,
    pub lambda: BoundaryVector,
    pub z_prev: BoundaryVector,
    pub tso: Option<LocalSolution>,
    pub dso: Option<LocalSolution>,
}

impl AdmmState {
    /// Flat start: `V = 1`, `Theta = p = q = 0` on both sides, zero duals.
    pub fn initial(boundary_buses: usize) -> AdmmState {
        let mut flat = BoundaryVector::zeros(boundary_buses);
        for pos in 0..boundary_buses {
            flat.set(pos, Component::V, 1.0);
        }
        AdmmState {
            iteration: 0,
            x: flat.clone(),
            z: flat.clone(),
            lambda: BoundaryVector::zeros(boundary_buses),
            z_prev: flat,
            tso: None,
            dso: None,
        }
    }
}

/// A run in progress. Cloning it gives an exact checkpoint from which a
/// different injection plan can be continued.
#[derive(Debug, Clone)]
pub struct AdmmRun<'a> {
    tso: &'a RegionModel,
    dso: &'a RegionModel,
    config: AdmmConfig,
    state: AdmmState,
    records: Vec<IterationRecord>,
    termination: Option<Termination>,
}

impl<'a> AdmmRun<'a> {
    pub fn new(tso: &'a RegionModel, dso: &'a RegionModel, config: AdmmConfig) -> Result<Self, AdmmError> {
        config.validate()?;
        if tso.kind != RegionKind::Tso || dso.kind != RegionKind::Dso {
            return Err(AdmmError::Regions("expected a TSO and a DSO region".into()));
        }
        if tso.boundary_ids() != dso.boundary_ids() {
            return Err(AdmmError::Regions(format!(
                "boundary lists differ: {:?} vs {:?}",
                tso.boundary_ids(),
                dso.boundary_ids()
            )));
        }
        Ok(AdmmRun { tso, dso, config, state: AdmmState::initial(tso.boundary_len()), records: Vec::new(), termination: None })
    }

    /// Continues from an explicit state, e.g. a non-default starting point.
    pub fn with_state(mut self, state: AdmmState) -> Result<Self, AdmmError> {
        let n = 4 * self.tso.boundary_len();
        for v in [&state.x, &state.z, &state.lambda, &state.z_prev] {
            if v.len() != n {
                return Err(AdmmError::Dimension { expected: n, found: v.len() });
            }
        }
        self.state = state;
        self.records.clear();
        self.termination = None;
        Ok(self)
    }

    /// Resumes from a state and the records that led to it, e.g. a prefix
    /// of an earlier run with the same configuration.
    pub fn resume(
        tso: &'a RegionModel,
        dso: &'a RegionModel,
        config: AdmmConfig,
        state: AdmmState,
        records: Vec<IterationRecord>,
    ) -> Result<Self, AdmmError> {
        if records.len() != state.iteration || records.iter().enumerate().any(|(i, r)| r.iteration != i + 1) {
            return Err(AdmmError::Config(format!(
                "{} records do not lead to iteration {}",
                records.len(),
                state.iteration
            )));
        }
        let mut run = AdmmRun::new(tso, dso, config)?.with_state(state)?;
        run.records = records;
        Ok(run)
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.config
    }

    pub fn termination(&self) -> Option<&Termination> {
        self.termination.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.termination.is_some()
    }

    /// Performs one iteration. Does nothing once the run has terminated.
    pub fn step(&mut self, plan: &mut dyn InjectionPlan) -> Result<(), AdmmError> {
        if self.termination.is_some() {
            return Ok(());
        }
        let started = Instant::now();
        let k = self.state.iteration + 1;
        let rho = self.config.rho;
        let opts = &self.config.solver;
        let mut attack_ids = Vec::new();

        let tso_spec = SubproblemSpec {
            region: self.tso,
            coupling_target: &self.state.z,
            dual: &self.state.lambda,
            rho,
            warm_start: self.state.tso.as_ref(),
        };
        let tso_sol = match solve_local_subproblem(&tso_spec, opts) {
            Ok(sol) => sol,
            Err(e) => return self.diverge(k, RegionKind::Tso, e),
        };
        let mut x = tso_sol.boundary_vector(self.tso);
        let x_clean = x.clone();
        if let Some(inj) = self.call_plan(plan, k, Side::X, &x, &self.state.z)? {
            x = x.add(&inj.delta)?;
            attack_ids.push(inj.id);
        }

        let dso_spec = SubproblemSpec {
            region: self.dso,
            coupling_target: &x,
            dual: &self.state.lambda,
            rho,
            warm_start: self.state.dso.as_ref(),
        };
        let dso_sol = match solve_local_subproblem(&dso_spec, opts) {
            Ok(sol) => sol,
            Err(e) => return self.diverge(k, RegionKind::Dso, e),
        };
        let mut z = dso_sol.boundary_vector(self.dso);
        let z_clean = z.clone();
        if let Some(inj) = self.call_plan(plan, k, Side::Z, &x, &z)? {
            z = z.add(&inj.delta)?;
            attack_ids.push(inj.id);
        }

        let r = primal_residual(&x, &z)?;
        let s = dual_residual(&z, &self.state.z, rho)?;
        let lambda = self.state.lambda.add(&x.sub(&z)?)?;

        let balance = observed_balance(self.tso, &tso_sol, &x).chain(observed_balance(self.dso, &dso_sol, &z)).collect();
        let record = IterationRecord {
            iteration: k,
            r,
            s,
            x: x.clone(),
            z: z.clone(),
            lambda: lambda.clone(),
            r_clean: primal_residual(&x_clean, &z_clean)?,
            attack: if attack_ids.is_empty() { None } else { Some(attack_ids.join("+")) },
            time_ms: started.elapsed().as_secs_f64() * 1e3,
            tso_vm: tso_sol.vm.clone(),
            dso_vm: dso_sol.vm.clone(),
            balance,
        };

        self.state = AdmmState {
            iteration: k,
            z_prev: std::mem::replace(&mut self.state.z, z.clone()),
            x,
            z,
            lambda,
            tso: Some(tso_sol),
            dso: Some(dso_sol),
        };
        self.records.push(record);
        if r <= self.config.primal_tol && s <= self.config.dual_tol {
            self.termination = Some(Termination::Converged);
        } else if k >= self.config.max_iter {
            self.termination = Some(Termination::MaxIter);
        }
        Ok(())
    }

    /// Steps until termination.
    pub fn run_to_end(&mut self, plan: &mut dyn InjectionPlan) -> Result<(), AdmmError> {
        while !self.is_finished() {
            self.step(plan)?;
        }
        Ok(())
    }

    /// Steps until `iteration` has been completed or the run ends.
    pub fn run_until(&mut self, iteration: usize, plan: &mut dyn InjectionPlan) -> Result<(), AdmmError> {
        while !self.is_finished() && self.state.iteration < iteration {
            self.step(plan)?;
        }
        Ok(())
    }

    pub fn into_trace(self) -> Trace {
        Trace {
            boundary_ids: self.tso.boundary_ids(),
            records: self.records,
            termination: self.termination.unwrap_or(Termination::Incomplete),
            final_state: self.state,
        }
    }

    fn call_plan(
        &self,
        plan: &mut dyn InjectionPlan,
        iteration: usize,
        side: Side,
        x: &BoundaryVector,
        z: &BoundaryVector,
    ) -> Result<Option<Injection>, AdmmError> {
        let ctx = InjectionContext { iteration, side, x, z, lambda: &self.state.lambda, history: &self.records };
        let inj = plan.inject(&ctx).map_err(|message| AdmmError::Injection { iteration, message })?;
        if let Some(inj) = &inj {
            if inj.delta.len() != x.len() {
                return Err(AdmmError::Dimension { expected: x.len(), found: inj.delta.len() });
            }
        }
        Ok(inj)
    }

    fn diverge(&mut self, iteration: usize, region: RegionKind, err: OpfError) -> Result<(), AdmmError> {
        self.termination = Some(Termination::Diverged { iteration, region, reason: err.to_string() });
        Ok(())
    }
}

/// Runs a fresh ADMM to termination.
pub fn run(tso: &RegionModel, dso: &RegionModel, config: AdmmConfig, plan: &mut dyn InjectionPlan) -> Result<Trace, AdmmError> {
    let mut admm = AdmmRun::new(tso, dso, config)?;
    admm.run_to_end(plan)?;
    Ok(admm.into_trace())
}

/// Per-bus balance residual magnitude of the state a coordinator observes:
/// the region's solution with its boundary replaced by the published value.
fn observed_balance<'s>(region: &'s RegionModel, sol: &LocalSolution, shared: &BoundaryVector) -> impl Iterator<Item = f64> + 's {
    let observed = sol.with_boundary(region, shared);
    power_flow_mismatch(region, &observed).into_iter().map(|(dp, dq)| dp.hypot(dq))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(v: &[f64]) -> BoundaryVector {
        BoundaryVector::from_vec(v.to_vec()).unwrap()
    }

    #[test]
    fn residual_examples() {
        let zero = BoundaryVector::zeros(1);
        assert_eq!(primal_residual(&zero, &zero).unwrap(), 0.0);
        assert_eq!(primal_residual(&bv(&[1.0, 0.0, 0.0, 0.0]), &zero).unwrap(), 1.0);
        assert_eq!(primal_residual(&bv(&[3.0, 4.0, 0.0, 0.0]), &zero).unwrap(), 5.0);
        assert_eq!(dual_residual(&zero, &zero, 100.0).unwrap(), 0.0);
        assert_eq!(dual_residual(&bv(&[1.0, 0.0, 0.0, 0.0]), &zero, 2.0).unwrap(), 2.0);
        let s = dual_residual(&bv(&[1e-4, 0.0, 0.0, 0.0]), &zero, 100.0).unwrap();
        assert!((s - 1e-2).abs() < 1e-15);
        assert!(primal_residual(&zero, &BoundaryVector::zeros(2)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdmmConfig::default().validate().is_ok());
        assert!(AdmmConfig { rho: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdmmConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(AdmmConfig { primal_tol: 0.0, ..Default::default() }.validate().is_err());
    }
}
