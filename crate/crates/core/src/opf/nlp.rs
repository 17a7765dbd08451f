//! Primal-dual interior-point method for smooth problems of the form
//!
//! ```text
//! minimize f(x)  subject to  g(x) = 0,  lower <= x <= upper
//! ```
//!
//! The iteration follows the classic MATPOWER Interior Point Solver scheme:
//! a Newton step on the perturbed KKT conditions with slack variables for the
//! bounds, a fraction-to-boundary rule, and a centering parameter of 0.1.

use nalgebra::{DMatrix, DVector};

pub trait NlpProblem {
    fn dim(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    fn objective(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Adds the objective Hessian to `out`.
    fn objective_hessian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);
    fn constraints(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Writes the constraint Jacobian into a zeroed `out` (rows: constraints).
    fn jacobian(&self, x: &DVector<f64>, out: &mut DMatrix<f64>);
    /// Adds `sum_i lam_i * hess(g_i)` to `out`.
    fn constraint_hessian(&self, x: &DVector<f64>, lam: &DVector<f64>, out: &mut DMatrix<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    /// Absolute limit on the largest equality violation.
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    pub max_iter: usize,
}

impl Default for IpmOptions {
    fn default() -> Self {
        IpmOptions { feas_tol: 1e-6, grad_tol: 1e-6, comp_tol: 1e-6, cost_tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub lambda: DVector<f64>,
    pub status: IpmStatus,
    pub iterations: usize,
    /// Largest absolute equality violation.
    pub feasibility: f64,
    /// Scaled Lagrangian gradient norm.
    pub stationarity: f64,
}

const XI: f64 = 0.99995;
const SIGMA: f64 = 0.1;

struct Bounds {
    /// (variable index, sign): h = sign * (x_j - bound) <= 0
    rows: Vec<(usize, f64, f64)>,
}

impl Bounds {
    fn new(lower: &[f64], upper: &[f64]) -> Bounds {
        let mut rows = Vec::new();
        for (j, &u) in upper.iter().enumerate() {
            if u.is_finite() {
                rows.push((j, 1.0, u));
            }
        }
        for (j, &l) in lower.iter().enumerate() {
            if l.is_finite() {
                rows.push((j, -1.0, l));
            }
        }
        Bounds { rows }
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&(j, s, b)| s * (x[j] - b)))
    }
}

/// Solves `problem` from `x0`.
pub fn solve(problem: &dyn NlpProblem, x0: &DVector<f64>, opts: &IpmOptions) -> IpmResult {
    let n = problem.dim();
    let m = problem.n_eq();
    let bounds = Bounds::new(problem.lower(), problem.upper());
    let niq = bounds.rows.len();

    let mut x = x0.clone();
    let mut f = problem.objective(&x);
    let mut grad = DVector::zeros(n);
    let mut g = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, n);
    problem.gradient(&x, &mut grad);
    problem.constraints(&x, &mut g);
    problem.jacobian(&x, &mut jac);
    let mut h = bounds.eval(&x);

    let mut z = DVector::from_iterator(niq, h.iter().map(|&hi| (-hi).max(1.0)));
    let mut mu = DVector::from_element(niq, 1.0);
    let mut lam = DVector::zeros(m);
    let mut gamma = 1.0;

    let lagrangian_grad = |grad: &DVector<f64>, jac: &DMatrix<f64>, lam: &DVector<f64>, mu: &DVector<f64>| {
        let mut lx = grad + jac.transpose() * lam;
        for (r, &(j, s, _)) in bounds.rows.iter().enumerate() {
            lx[j] += s * mu[r];
        }
        lx
    };

    let mut lx = lagrangian_grad(&grad, &jac, &lam, &mu);
    let mut status = IpmStatus::MaxIter;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;
    let mut feasibility = g.amax();

    let mut kkt = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    let mut hess = DMatrix::zeros(n, n);

    for it in 1..=opts.max_iter {
        iterations = it;
        hess.fill(0.0);
        problem.objective_hessian(&x, &mut hess);
        problem.constraint_hessian(&x, &lam, &mut hess);

        // M = Lxx + Jh' diag(mu/z) Jh ; N = Lx + Jh' ((mu .* h + gamma) ./ z)
        let mut nvec = lx.clone();
        for (r, &(j, s, _)) in bounds.rows.iter().enumerate() {
            hess[(j, j)] += mu[r] / z[r];
            nvec[j] += s * (mu[r] * h[r] + gamma) / z[r];
        }
        kkt.fill(0.0);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
        kkt.view_mut((n, 0), (m, n)).copy_from(&jac);
        kkt.view_mut((0, n), (n, m)).copy_from(&jac.transpose());
        for i in 0..n {
            rhs[i] = -nvec[i];
        }
        for i in 0..m {
            rhs[n + i] = -g[i];
        }
        let Some(step) = kkt.clone().lu().solve(&rhs) else {
            status = IpmStatus::NumericalFailure;
            break;
        };
        if step.iter().any(|v| !v.is_finite()) {
            status = IpmStatus::NumericalFailure;
            break;
        }
        let dx = step.rows(0, n).into_owned();
        let dlam = step.rows(n, m).into_owned();

        let mut dz = DVector::zeros(niq);
        let mut dmu = DVector::zeros(niq);
        for (r, &(j, s, _)) in bounds.rows.iter().enumerate() {
            dz[r] = -h[r] - z[r] - s * dx[j];
            dmu[r] = -mu[r] + (gamma - mu[r] * dz[r]) / z[r];
        }

        let mut alpha_p: f64 = 1.0;
        let mut alpha_d: f64 = 1.0;
        for r in 0..niq {
            if dz[r] < 0.0 {
                alpha_p = alpha_p.min(XI * (-z[r] / dz[r]));
            }
            if dmu[r] < 0.0 {
                alpha_d = alpha_d.min(XI * (-mu[r] / dmu[r]));
            }
        }

        x += alpha_p * &dx;
        z += alpha_p * &dz;
        lam += alpha_d * &dlam;
        mu += alpha_d * &dmu;
        if niq > 0 {
            gamma = SIGMA * z.dot(&mu) / niq as f64;
        }

        let f_prev = f;
        f = problem.objective(&x);
        problem.gradient(&x, &mut grad);
        problem.constraints(&x, &mut g);
        jac.fill(0.0);
        problem.jacobian(&x, &mut jac);
        h = bounds.eval(&x);
        lx = lagrangian_grad(&grad, &jac, &lam, &mu);

        if !f.is_finite() || x.iter().any(|v| !v.is_finite()) {
            status = IpmStatus::NumericalFailure;
            break;
        }

        let xnorm = x.amax();
        let bound_violation = h.iter().fold(0.0f64, |acc, &v| acc.max(v));
        feasibility = g.amax();
        let lam_norm = lam.amax().max(if niq > 0 { mu.amax() } else { 0.0 });
        stationarity = lx.amax() / (1.0 + lam_norm);
        let comp = if niq > 0 { z.dot(&mu) / (1.0 + xnorm) } else { 0.0 };
        let cost = (f - f_prev).abs() / (1.0 + f_prev.abs());
        if feasibility <= opts.feas_tol
            && bound_violation <= opts.feas_tol
            && stationarity <= opts.grad_tol
            && comp <= opts.comp_tol
            && cost <= opts.cost_tol
        {
            status = IpmStatus::Converged;
            break;
        }
    }

    IpmResult { x, objective: f, lambda: lam, status, iterations, feasibility, stationarity }
}
