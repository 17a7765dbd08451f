//! Goal-oriented attack:
//!
//! ```text
//! minimize   ||a||^2 + sum_i |z_q,i + a_q,i|
//! subject to z_V,i + a_V,i >= V_u       for each target bus i
//!            ||a - y|| = ||y||
//! ```
//!
//! Written as `a = y + ||y|| u` with `||u|| = 1`, the voltage constraints
//! become lower bounds on single coordinates of `u`, so the feasible set is
//! the unit sphere cut by a few half-spaces. Projection onto that set is
//! exact (enumerate which bounds are active), and the problem is solved by
//! multi-start projected gradient descent on a smoothed objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{criterion, norm, AttackError, AttackFamily, AttackVector, Criterion, GapVector};
use crate::network::{BoundaryVector, Component};

/// Most target buses the exact projection enumerates over.
const MAX_TARGETS: usize = 12;
const SMOOTHING: [f64; 4] = [1e-2, 1e-4, 1e-6, 1e-8];
const GUARD_WEIGHT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalOptions {
    pub starts: usize,
    pub seed: u64,
    /// Projected-gradient steps per smoothing level.
    pub max_steps: usize,
}

impl Default for GoalOptions {
    fn default() -> Self {
        GoalOptions { starts: 32, seed: 0, max_steps: 400 }
    }
}

/// Optional cap on the dual residual the attack produces:
/// `rho * ||delta_z + a|| <= bound`, where `delta_z = z - z_prev` before the
/// attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualGuard {
    pub delta_z: Vec<f64>,
    pub rho: f64,
    pub bound: f64,
}

impl DualGuard {
    pub fn predicted(&self, a_full: &[f64]) -> f64 {
        self.rho * self.delta_z.iter().zip(a_full).map(|(d, a)| (d + a).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalAttack {
    pub attack: AttackVector,
    pub objective: f64,
    pub criterion: Criterion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_dual: Option<f64>,
}

struct Instance<'a> {
    y: &'a [f64],
    radius: f64,
    /// (restricted index, lower bound on u)
    v_bounds: Vec<(usize, f64)>,
    /// (restricted index, z_q)
    q_terms: Vec<(usize, f64)>,
    guard: Option<&'a DualGuard>,
    gap: &'a GapVector,
}

impl Instance<'_> {
    fn attack(&self, u: &[f64]) -> Vec<f64> {
        self.y.iter().zip(u).map(|(y, u)| y + self.radius * u).collect()
    }

    fn exact(&self, a: &[f64]) -> f64 {
        let mag: f64 = a.iter().map(|v| v * v).sum();
        let pay: f64 = self.q_terms.iter().map(|&(j, zq)| (zq + a[j]).abs()).sum();
        mag + pay
    }

    fn guard_excess(&self, a: &[f64]) -> Option<(f64, Vec<f64>)> {
        let guard = self.guard?;
        let full = self.gap.embed(a);
        let s = guard.predicted(&full);
        Some((s - guard.bound, full))
    }

    fn smoothed(&self, u: &[f64], eps: f64) -> f64 {
        let a = self.attack(u);
        let mag: f64 = a.iter().map(|v| v * v).sum();
        let pay: f64 = self.q_terms.iter().map(|&(j, zq)| (zq + a[j]).hypot(eps)).sum();
        let pen = match self.guard_excess(&a) {
            Some((excess, _)) if excess > 0.0 => GUARD_WEIGHT * excess * excess,
            _ => 0.0,
        };
        mag + pay + pen
    }

    fn gradient(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let a = self.attack(u);
        let mut g: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        for &(j, zq) in &self.q_terms {
            let w = zq + a[j];
            g[j] += w / w.hypot(eps);
        }
        if let (Some(guard), Some((excess, full))) = (self.guard, self.guard_excess(&a)) {
            if excess > 0.0 {
                let dn = guard.delta_z.iter().zip(&full).map(|(d, a)| (d + a).powi(2)).sum::<f64>().sqrt();
                if dn > 0.0 {
                    for (k, &idx) in self.gap.support().indices().iter().enumerate() {
                        g[k] += 2.0 * GUARD_WEIGHT * excess * guard.rho * (guard.delta_z[idx] + full[idx]) / dn;
                    }
                }
            }
        }
        g.iter_mut().for_each(|v| *v *= self.radius);
        g
    }

    /// Nearest point to `w` on the unit sphere with `u_j >= t_j` for every
    /// voltage bound.
    fn project(&self, w: &[f64]) -> Option<Vec<f64>> {
        let k = self.v_bounds.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << k) {
            let active: Vec<(usize, f64)> =
                self.v_bounds.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &b)| b).collect();
            let pinned: f64 = active.iter().map(|(_, t)| t * t).sum();
            if pinned > 1.0 {
                continue;
            }
            let r = (1.0 - pinned).sqrt();
            let is_active = |j: usize| active.iter().any(|&(i, _)| i == j);
            let mut u: Vec<f64> = w.iter().enumerate().map(|(j, &v)| if is_active(j) { 0.0 } else { v }).collect();
            let rest = norm(&u);
            if rest > 0.0 {
                u.iter_mut().for_each(|v| *v *= r / rest);
            } else if r > 0.0 {
                match (0..u.len()).find(|&j| !is_active(j)) {
                    Some(j) => u[j] = r,
                    None => continue,
                }
            }
            for &(j, t) in &active {
                u[j] = t;
            }
            if self.v_bounds.iter().any(|&(j, t)| u[j] < t - 1e-14) {
                continue;
            }
            let score: f64 = u.iter().zip(w).map(|(p, q)| p * q).sum();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, u));
            }
        }
        best.map(|(_, u)| u)
    }

    fn descend(&self, start: Vec<f64>, max_steps: usize) -> Vec<f64> {
        let mut u = start;
        for &eps in &SMOOTHING {
            let mut step = 1.0;
            let mut f = self.smoothed(&u, eps);
            for _ in 0..max_steps {
                let g = self.gradient(&u, eps);
                let mut moved = false;
                while step > 1e-14 {
                    let trial: Vec<f64> = u.iter().zip(&g).map(|(p, q)| p - step * q).collect();
                    let Some(cand) = self.project(&trial) else {
                        step *= 0.5;
                        continue;
                    };
                    let dist2: f64 = cand.iter().zip(&u).map(|(p, q)| (p - q).powi(2)).sum();
                    let fc = self.smoothed(&cand, eps);
                    if fc <= f - 1e-4 * dist2 / step {
                        moved = dist2 > 1e-26;
                        u = cand;
                        f = fc;
                        step = (step * 2.0).min(1e3);
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
        }
        u
    }
}

/// Solves the goal-oriented attack over the support of `y`. The support
/// must contain the V and q entries of every target bus.
pub fn goal_oriented(
    z: &BoundaryVector,
    y: &GapVector,
    boundary_ids: &[usize],
    targets: &[usize],
    v_u: f64,
    guard: Option<&DualGuard>,
    opts: &GoalOptions,
) -> Result<GoalAttack, AttackError> {
    if z.len() != y.full().len() {
        return Err(AttackError::Dimension { expected: y.full().len(), found: z.len() });
    }
    if targets.len() > MAX_TARGETS {
        return Err(AttackError::Capacity(targets.len()));
    }
    if let Some(g) = guard {
        if g.delta_z.len() != z.len() {
            return Err(AttackError::Dimension { expected: z.len(), found: g.delta_z.len() });
        }
    }
    let radius = y.norm();
    let ys = y.restricted();
    let locate = |bus: usize, c: Component| -> Result<(usize, usize), AttackError> {
        let pos = boundary_ids.iter().position(|&b| b == bus).ok_or(AttackError::NotBoundary(bus))?;
        let full = BoundaryVector::index_of(pos, c);
        let restricted = y.support().position(full).ok_or(AttackError::Support(full))?;
        Ok((full, restricted))
    };
    let mut v_idx = Vec::new();
    let mut q_terms = Vec::new();
    for &bus in targets {
        v_idx.push(locate(bus, Component::V)?);
        let (qf, qr) = locate(bus, Component::Q)?;
        q_terms.push((qr, z[qf]));
    }

    let zero_ok = v_idx.iter().all(|&(f, _)| z[f] >= v_u);
    if radius == 0.0 {
        if !zero_ok {
            return Err(AttackError::GoalInfeasible { max_voltage: v_idx.iter().map(|&(f, _)| z[f]).collect() });
        }
        return Err(AttackError::NoGap);
    }

    let v_bounds: Vec<(usize, f64)> = v_idx.iter().map(|&(f, r)| (r, (v_u - z[f] - ys[r]) / radius)).collect();
    let pinned: f64 = v_bounds.iter().map(|&(_, t)| t.max(0.0).powi(2)).sum();
    if v_bounds.iter().any(|&(_, t)| t > 1.0) || pinned > 1.0 {
        return Err(AttackError::GoalInfeasible { max_voltage: v_idx.iter().map(|&(f, r)| z[f] + ys[r] + radius).collect() });
    }

    let inst = Instance { y: ys, radius, v_bounds, q_terms, guard, gap: y };
    let m = ys.len();
    let mut starts: Vec<Vec<f64>> = vec![ys.iter().map(|v| -v / radius).collect()];
    for &(j, _) in &inst.v_bounds {
        let mut e = vec![0.0; m];
        e[j] = 1.0;
        starts.push(e);
    }
    for &(j, zq) in &inst.q_terms {
        let mut e = vec![0.0; m];
        e[j] = if zq + ys[j] > 0.0 { -1.0 } else { 1.0 };
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.starts.max(1) {
        starts.push((0..m).map(|_| StandardNormal.sample(&mut rng)).collect());
    }

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    if zero_ok {
        candidates.push(vec![0.0; m]);
    }
    for s in starts {
        if let Some(u0) = inst.project(&s) {
            let u = inst.descend(u0, opts.max_steps);
            let mut a = inst.attack(&u);
            for &(f, r) in &v_idx {
                a[r] = a[r].max(v_u - z[f]);
            }
            candidates.push(a);
        }
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut best_guard = f64::INFINITY;
    for a in candidates {
        if let Some((excess, _)) = inst.guard_excess(&a) {
            best_guard = best_guard.min(excess + guard.map_or(0.0, |g| g.bound));
            if excess > 1e-12 * guard.map_or(1.0, |g| g.bound.max(1.0)) {
                continue;
            }
        }
        let obj = inst.exact(&a);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, a));
        }
    }
    let Some((objective, a)) = best else {
        return Err(AttackError::GuardInfeasible { best: best_guard });
    };
    let crit = criterion(&a, ys)?;
    let attack = AttackVector { values: y.embed(&a), support: y.support().clone(), family: AttackFamily::GoalOriented, scenario: None };
    let predicted_dual = guard.map(|g| g.predicted(&attack.values));
    Ok(GoalAttack { attack, objective, criterion: crit, predicted_dual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Support;

    fn setup(z: Vec<f64>, y: Vec<f64>) -> (BoundaryVector, GapVector) {
        let z = BoundaryVector::from_vec(z).unwrap();
        let gap = GapVector::with_support(y, Support::all(4)).unwrap();
        (z, gap)
    }

    #[test]
    fn null_attack_when_goal_already_met() {
        let (z, y) = setup(vec![1.1, 0.0, 0.3, 0.0], vec![0.02, -0.01, 0.03, 0.01]);
        let res = goal_oriented(&z, &y, &[4], &[4], 1.05, None, &GoalOptions::default()).unwrap();
        assert_eq!(res.objective, 0.0);
        assert!(res.attack.values.iter().all(|&v| v == 0.0));
        assert!(res.criterion.satisfied);
    }

    #[test]
    fn reduces_reactive_payment() {
        let (z, y) = setup(vec![1.0, 0.0, 0.3, 0.2], vec![0.05, 0.02, -0.1, 0.15]);
        let res = goal_oriented(&z, &y, &[4], &[4], 1.0, None, &GoalOptions::default()).unwrap();
        let q = z[3] + res.attack.values[3];
        assert!(q.abs() < 0.2, "q after attack {q}");
        assert!(res.criterion.value.abs() < 1e-9);
        assert!(z[0] + res.attack.values[0] >= 1.0);
    }

    #[test]
    fn unreachable_voltage_is_reported() {
        let (z, y) = setup(vec![0.9, 0.0, 0.0, 0.1], vec![0.01, 0.0, 0.0, 0.0]);
        match goal_oriented(&z, &y, &[4], &[4], 1.1, None, &GoalOptions::default()) {
            Err(AttackError::GoalInfeasible { max_voltage }) => assert!((max_voltage[0] - 0.92).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn guard_limits_predicted_dual() {
        let (z, y) = setup(vec![1.0, 0.0, 0.3, 0.2], vec![0.05, 0.02, -0.1, 0.15]);
        let free = goal_oriented(&z, &y, &[4], &[4], 1.0, None, &GoalOptions::default()).unwrap();
        let delta = vec![0.0; 4];
        let unguarded = DualGuard { delta_z: delta.clone(), rho: 100.0, bound: f64::INFINITY }.predicted(&free.attack.values);
        let guard = DualGuard { delta_z: delta, rho: 100.0, bound: 0.5 * unguarded };
        let res = goal_oriented(&z, &y, &[4], &[4], 1.0, Some(&guard), &GoalOptions::default()).unwrap();
        assert!(res.predicted_dual.unwrap() <= guard.bound * (1.0 + 1e-9));
        assert!(res.objective >= free.objective - 1e-9);
        assert!(res.criterion.value.abs() < 1e-9);
    }
}
