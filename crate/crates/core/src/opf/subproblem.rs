use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::flow::Admittance;
use super::nlp::{self, IpmOptions, IpmStatus, NlpProblem};
use super::OpfError;
use crate::network::{BoundaryVector, Component, RegionKind, RegionModel};

/// Local optimum of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub objective: f64,
    /// Largest absolute bus power mismatch, p.u.
    pub mismatch: f64,
    pub stationarity: f64,
    pub iterations: usize,
}

impl LocalSolution {
    /// Boundary quantities in shared-vector order. DSO injections are negated
    /// so that consensus reads `p_i = -p_i,copy`.
    pub fn boundary_vector(&self, region: &RegionModel) -> BoundaryVector {
        let mut out = BoundaryVector::zeros(region.boundary_len());
        let sign = region.kind.injection_sign();
        for (pos, att) in region.boundary.iter().enumerate() {
            out.set(pos, Component::V, self.vm[att.local_bus]);
            out.set(pos, Component::Theta, self.va[att.local_bus]);
            out.set(pos, Component::P, sign * self.pg[att.gen]);
            out.set(pos, Component::Q, sign * self.qg[att.gen]);
        }
        out
    }

    /// Flat voltage profile with every generator at zero output.
    pub fn flat(region: &RegionModel) -> LocalSolution {
        LocalSolution {
            vm: vec![1.0; region.buses.len()],
            va: vec![0.0; region.buses.len()],
            pg: vec![0.0; region.generators.len()],
            qg: vec![0.0; region.generators.len()],
            objective: 0.0,
            mismatch: f64::NAN,
            stationarity: f64::NAN,
            iterations: 0,
        }
    }

    /// Overwrites the boundary quantities with `shared`, undoing the DSO sign
    /// convention. Used to evaluate the state a coordinator observes.
    pub fn with_boundary(&self, region: &RegionModel, shared: &BoundaryVector) -> LocalSolution {
        let mut out = self.clone();
        let sign = region.kind.injection_sign();
        for (pos, att) in region.boundary.iter().enumerate() {
            out.vm[att.local_bus] = shared.get(pos, Component::V);
            out.va[att.local_bus] = shared.get(pos, Component::Theta);
            out.pg[att.gen] = sign * shared.get(pos, Component::P);
            out.qg[att.gen] = sign * shared.get(pos, Component::Q);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub ipm: IpmOptionsSerde,
    /// Multiplier applied to the case cost (cost units per hour).
    pub cost_scale: f64,
}

/// Serializable mirror of [`IpmOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpmOptionsSerde {
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    pub max_iter: usize,
}

impl From<IpmOptionsSerde> for IpmOptions {
    fn from(o: IpmOptionsSerde) -> Self {
        IpmOptions { feas_tol: o.feas_tol, grad_tol: o.grad_tol, comp_tol: o.comp_tol, cost_tol: o.cost_tol, max_iter: o.max_iter }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        let d = IpmOptions::default();
        SolverOptions {
            ipm: IpmOptionsSerde {
                feas_tol: d.feas_tol,
                grad_tol: d.grad_tol,
                comp_tol: d.comp_tol,
                cost_tol: d.cost_tol,
                max_iter: d.max_iter,
            },
            cost_scale: DEFAULT_COST_SCALE,
        }
    }
}

/// Case costs ($/h) are multiplied by this before entering the subproblem
/// objective; 0.01 expresses them in units of $100/h.
pub const DEFAULT_COST_SCALE: f64 = 0.01;

/// One region's augmented-Lagrangian step.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub region: &'a RegionModel,
    /// The other side's current boundary value.
    pub coupling_target: &'a BoundaryVector,
    /// Scaled dual variable.
    pub dual: &'a BoundaryVector,
    pub rho: f64,
    pub warm_start: Option<&'a LocalSolution>,
}

struct RegionProblem<'a> {
    region: &'a RegionModel,
    adm: Admittance,
    nb: usize,
    ng: usize,
    gens_at: Vec<Vec<usize>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// (variable, sign, center) for each boundary entry
    penalty: Vec<(usize, f64, f64)>,
    /// (variable, value) pairs held by equality rows
    fixed: Vec<(usize, f64)>,
    rho: f64,
    cost_scale: f64,
}

impl<'a> RegionProblem<'a> {
    fn new(region: &'a RegionModel, penalty_center: Option<&BoundaryVector>, rho: f64, cost_scale: f64) -> Self {
        let nb = region.buses.len();
        let ng = region.generators.len();
        let mut gens_at = vec![Vec::new(); nb];
        for (g, gen) in region.generators.iter().enumerate() {
            gens_at[gen.bus].push(g);
        }
        let mut lower = vec![f64::NEG_INFINITY; nb];
        let mut upper = vec![f64::INFINITY; nb];
        lower.extend(region.buses.iter().map(|b| b.vmin));
        upper.extend(region.buses.iter().map(|b| b.vmax));
        lower.extend(region.generators.iter().map(|g| g.pmin));
        upper.extend(region.generators.iter().map(|g| g.pmax));
        lower.extend(region.generators.iter().map(|g| g.qmin));
        upper.extend(region.generators.iter().map(|g| g.qmax));

        let mut penalty = Vec::new();
        if let Some(center) = penalty_center {
            let sign = region.kind.injection_sign();
            for (pos, att) in region.boundary.iter().enumerate() {
                penalty.push((nb + att.local_bus, 1.0, center.get(pos, Component::V)));
                penalty.push((att.local_bus, 1.0, center.get(pos, Component::Theta)));
                penalty.push((2 * nb + att.gen, sign, center.get(pos, Component::P)));
                penalty.push((2 * nb + ng + att.gen, sign, center.get(pos, Component::Q)));
            }
        }
        RegionProblem { region, adm: Admittance::build(region), nb, ng, gens_at, lower, upper, penalty, fixed: Vec::new(), rho, cost_scale }
    }

    fn split<'x>(&self, x: &'x DVector<f64>) -> (&'x [f64], &'x [f64], &'x [f64], &'x [f64]) {
        let s = x.as_slice();
        let (nb, ng) = (self.nb, self.ng);
        (&s[..nb], &s[nb..2 * nb], &s[2 * nb..2 * nb + ng], &s[2 * nb + ng..])
    }

    fn pinned(&self) -> bool {
        self.region.reference_pinned
    }

    fn fixed_row(&self) -> usize {
        2 * self.nb + usize::from(self.pinned())
    }

    fn cost_coeffs(&self, g: usize) -> (f64, f64, f64) {
        let base = self.region.base_mva;
        let c = &self.region.generators[g].cost;
        let k = self.cost_scale;
        (k * c.c2 * base * base, k * c.c1 * base, k * c.c0)
    }

    fn initial_point(&self, warm: Option<&LocalSolution>) -> DVector<f64> {
        let r = self.region;
        let mut x = Vec::with_capacity(2 * self.nb + 2 * self.ng);
        match warm {
            Some(w) => {
                x.extend_from_slice(&w.va);
                x.extend_from_slice(&w.vm);
                x.extend_from_slice(&w.pg);
                x.extend_from_slice(&w.qg);
            }
            None => {
                let ref_angle = if self.pinned() { r.buses[r.reference].va0 } else { 0.0 };
                x.extend(r.buses.iter().map(|b| b.va0 - ref_angle));
                x.extend(r.buses.iter().map(|b| b.vm0));
                x.extend(r.generators.iter().map(|g| g.pg0));
                x.extend(r.generators.iter().map(|g| g.qg0));
            }
        }
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
        DVector::from_vec(x)
    }
}

impl NlpProblem for RegionProblem<'_> {
    fn dim(&self) -> usize {
        2 * self.nb + 2 * self.ng
    }

    fn n_eq(&self) -> usize {
        2 * self.nb + usize::from(self.pinned()) + self.fixed.len()
    }


    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let (_, _, pg, _) = self.split(x);
        let mut f = 0.0;
        for (g, &p) in pg.iter().enumerate() {
            let (a, b, c) = self.cost_coeffs(g);
            f += (a * p + b) * p + c;
        }
        let pen: f64 = self
            .penalty
            .iter()
            .map(|&(j, s, c)| {
                let d = s * x[j] - c;
                d * d
            })
            .sum();
        f + 0.5 * self.rho * pen
    }

    fn gradient(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        let off = 2 * self.nb;
        for g in 0..self.ng {
            let (a, b, _) = self.cost_coeffs(g);
            out[off + g] = 2.0 * a * x[off + g] + b;
        }
        for &(j, s, c) in &self.penalty {
            out[j] += self.rho * s * (s * x[j] - c);
        }
    }

    fn objective_hessian(&self, _x: &DVector<f64>, out: &mut DMatrix<f64>) {
        let off = 2 * self.nb;
        for g in 0..self.ng {
            let (a, _, _) = self.cost_coeffs(g);
            out[(off + g, off + g)] += 2.0 * a;
        }
        for &(j, _, _) in &self.penalty {
            out[(j, j)] += self.rho;
        }
    }

    fn constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let (va, vm, pg, qg) = self.split(x);
        let (p, q) = self.adm.injections(vm, va);
        let nb = self.nb;
        for (i, bus) in self.region.buses.iter().enumerate() {
            let gp: f64 = self.gens_at[i].iter().map(|&g| pg[g]).sum();
            let gq: f64 = self.gens_at[i].iter().map(|&g| qg[g]).sum();
            out[i] = p[i] - gp + bus.pd;
            out[nb + i] = q[i] - gq + bus.qd;
        }
        if self.pinned() {
            out[2 * nb] = va[self.region.reference];
        }
        let row = self.fixed_row();
        for (k, &(j, v)) in self.fixed.iter().enumerate() {
            out[row + k] = x[j] - v;
        }
    }

    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>) {
        let (va, vm, _, _) = self.split(x);
        let (nb, ng) = (self.nb, self.ng);
        // the flow block occupies rows 0..2nb, columns 0..2nb
        let mut flow = out.view_mut((0, 0), (2 * nb, 2 * nb)).into_owned();
        self.adm.jacobian_into(vm, va, &mut flow);
        out.view_mut((0, 0), (2 * nb, 2 * nb)).copy_from(&flow);
        for (g, gen) in self.region.generators.iter().enumerate() {
            out[(gen.bus, 2 * nb + g)] = -1.0;
            out[(nb + gen.bus, 2 * nb + ng + g)] = -1.0;
        }
        if self.pinned() {
            out[(2 * nb, self.region.reference)] = 1.0;
        }
        let row = self.fixed_row();
        for (k, &(j, _)) in self.fixed.iter().enumerate() {
            out[(row + k, j)] = 1.0;
        }
    }

    fn constraint_hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, out: &mut DMatrix<f64>) {
        let (va, vm, _, _) = self.split(x);
        let nb = self.nb;
        let lp = &lam.as_slice()[..nb];
        let lq = &lam.as_slice()[nb..2 * nb];
        let mut block = out.view((0, 0), (2 * nb, 2 * nb)).into_owned();
        self.adm.weighted_hessian_into(vm, va, lp, lq, &mut block);
        out.view_mut((0, 0), (2 * nb, 2 * nb)).copy_from(&block);
    }
}

fn check_limits(region: &RegionModel) -> Result<(), OpfError> {
    if region.generators.is_empty() {
        return Err(OpfError::Infeasible(format!("{:?} region has no generator", region.kind)));
    }
    for bus in &region.buses {
        if bus.vmin > bus.vmax {
            return Err(OpfError::Infeasible(format!("bus {} has vmin > vmax", bus.id)));
        }
    }
    for g in &region.generators {
        if g.pmin > g.pmax || g.qmin > g.qmax {
            return Err(OpfError::Infeasible(format!(
                "generator at local bus {} has inverted limits",
                g.bus
            )));
        }
    }
    let pmax: f64 = region.generators.iter().map(|g| g.pmax).sum();
    let load: f64 = region.buses.iter().map(|b| b.pd).sum();
    if pmax < load {
        return Err(OpfError::Infeasible(format!("capacity {pmax} p.u. below load {load} p.u.")));
    }
    Ok(())
}

fn solve_problem(problem: &RegionProblem<'_>, warm: Option<&LocalSolution>, opts: &SolverOptions) -> Result<LocalSolution, OpfError> {
    let x0 = problem.initial_point(warm);
    let res = nlp::solve(problem, &x0, &opts.ipm.into());
    let (va, vm, pg, qg) = problem.split(&res.x);
    let mut solution = LocalSolution {
        vm: vm.to_vec(),
        va: va.to_vec(),
        pg: pg.to_vec(),
        qg: qg.to_vec(),
        objective: res.objective,
        mismatch: 0.0,
        stationarity: res.stationarity,
        iterations: res.iterations,
    };
    solution.mismatch = max_mismatch(problem.region, &solution);
    match res.status {
        IpmStatus::Converged => Ok(solution),
        IpmStatus::MaxIter => Err(OpfError::Diverged {
            reason: format!("no convergence in {} iterations", res.iterations),
            best: Box::new(solution),
        }),
        IpmStatus::NumericalFailure => Err(OpfError::Diverged {
            reason: "numerical failure in the Newton step".into(),
            best: Box::new(solution),
        }),
    }
}

/// Minimizes region cost plus `(rho/2) * ||x - z + lambda||^2`, where the
/// region's own boundary value plays `x` (TSO) or `z` (DSO).
pub fn solve_local_subproblem(spec: &SubproblemSpec<'_>, opts: &SolverOptions) -> Result<LocalSolution, OpfError> {
    let region = spec.region;
    let n = region.boundary_len();
    for v in [spec.coupling_target, spec.dual] {
        if v.bus_count() != n || v.len() != 4 * n {
            return Err(OpfError::Dimension { expected: 4 * n, found: v.len() });
        }
    }
    if !(spec.rho > 0.0 && spec.rho.is_finite()) {
        return Err(OpfError::InvalidInput(format!("rho must be positive, got {}", spec.rho)));
    }
    if let Some(w) = spec.warm_start {
        if w.vm.len() != region.buses.len() || w.pg.len() != region.generators.len() {
            return Err(OpfError::Dimension { expected: region.buses.len(), found: w.vm.len() });
        }
    }
    check_limits(region)?;
    // x-update: ||x - (z - lambda)||^2 ; z-update: ||z - (x + lambda)||^2
    let center = match region.kind {
        RegionKind::Tso => spec.coupling_target.sub(spec.dual),
        RegionKind::Dso => spec.coupling_target.add(spec.dual),
    }
    .map_err(|e| OpfError::InvalidInput(e.to_string()))?;
    let problem = RegionProblem::new(region, Some(&center), spec.rho, opts.cost_scale);
    solve_problem(&problem, spec.warm_start, opts)
}

/// Plain economic dispatch OPF of a region without any coupling penalty.
/// The region must pin its angle reference.
pub fn solve_uncoupled(region: &RegionModel, opts: &SolverOptions) -> Result<LocalSolution, OpfError> {
    check_limits(region)?;
    let problem = RegionProblem::new(region, None, 0.0, opts.cost_scale);
    solve_problem(&problem, None, opts)
}

/// Solves the region OPF with its boundary voltage magnitude and exchange
/// `(p, q)` held at the values in `boundary`, no penalty. A region without
/// a pinned reference also takes its first boundary angle from `boundary`.
/// Used to check a region's response to a known coupling state.
pub fn solve_with_fixed_boundary(
    region: &RegionModel,
    boundary: &BoundaryVector,
    opts: &SolverOptions,
) -> Result<LocalSolution, OpfError> {
    check_limits(region)?;
    if boundary.len() != 4 * region.boundary_len() {
        return Err(OpfError::Dimension { expected: 4 * region.boundary_len(), found: boundary.len() });
    }
    let mut problem = RegionProblem::new(region, None, 0.0, opts.cost_scale);
    let (nb, ng) = (problem.nb, problem.ng);
    let sign = region.kind.injection_sign();
    for (pos, att) in region.boundary.iter().enumerate() {
        problem.fixed.push((nb + att.local_bus, boundary.get(pos, Component::V)));
        problem.fixed.push((2 * nb + att.gen, sign * boundary.get(pos, Component::P)));
        problem.fixed.push((2 * nb + ng + att.gen, sign * boundary.get(pos, Component::Q)));
    }
    if let (false, Some(first)) = (region.reference_pinned, region.boundary.first()) {
        problem.fixed.push((first.local_bus, boundary.get(0, Component::Theta)));
    }
    solve_problem(&problem, None, opts)
}

/// Per-bus `(dP, dQ)` = generation - load - network injection, p.u.
pub fn power_flow_mismatch(region: &RegionModel, solution: &LocalSolution) -> Vec<(f64, f64)> {
    let adm = Admittance::build(region);
    let (p, q) = adm.injections(&solution.vm, &solution.va);
    let mut out: Vec<(f64, f64)> = region
        .buses
        .iter()
        .enumerate()
        .map(|(i, bus)| (-bus.pd - p[i], -bus.qd - q[i]))
        .collect();
    for (g, gen) in region.generators.iter().enumerate() {
        out[gen.bus].0 += solution.pg[g];
        out[gen.bus].1 += solution.qg[g];
    }
    out
}

pub fn max_mismatch(region: &RegionModel, solution: &LocalSolution) -> f64 {
    power_flow_mismatch(region, solution)
        .iter()
        .fold(0.0f64, |acc, &(dp, dq)| acc.max(dp.abs()).max(dq.abs()))
}
