//! Polar-form AC power flow: bus admittance, injections and their first and
//! second derivatives, evaluated term by term over the admittance pattern.

use nalgebra::DMatrix;

use crate::network::RegionModel;

/// Dense bus admittance split into conductance and susceptance, with the
/// sparsity pattern kept as per-row neighbour lists.
#[derive(Debug, Clone)]
pub struct Admittance {
    pub g: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// For each bus, the other buses it shares a nonzero entry with.
    pub neighbours: Vec<Vec<usize>>,
}

impl Admittance {
    pub fn build(region: &RegionModel) -> Admittance {
        let n = region.buses.len();
        let mut g = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (i, bus) in region.buses.iter().enumerate() {
            g[(i, i)] += bus.gs;
            b[(i, i)] += bus.bs;
        }
        for br in &region.branches {
            // series admittance ys = 1 / (r + jx)
            let den = br.r * br.r + br.x * br.x;
            let (gs, bs) = (br.r / den, -br.x / den);
            let tap = br.tap();
            let (ct, st) = (br.shift.cos(), br.shift.sin());
            // tap = t * e^{j shift}
            let (tr, ti) = (tap * ct, tap * st);
            let t2 = tap * tap;
            let (f, t) = (br.from, br.to);
            // Ytt = ys + j b/2 ; Yff = Ytt / |tap|^2
            g[(t, t)] += gs;
            b[(t, t)] += bs + br.b / 2.0;
            g[(f, f)] += gs / t2;
            b[(f, f)] += (bs + br.b / 2.0) / t2;
            // Yft = -ys / conj(tap) ; Ytf = -ys / tap
            let (yft_r, yft_i) = cdiv(-gs, -bs, tr, -ti);
            let (ytf_r, ytf_i) = cdiv(-gs, -bs, tr, ti);
            g[(f, t)] += yft_r;
            b[(f, t)] += yft_i;
            g[(t, f)] += ytf_r;
            b[(t, f)] += ytf_i;
        }
        let mut neighbours = vec![Vec::new(); n];
        for i in 0..n {
            for k in 0..n {
                if i != k && (g[(i, k)] != 0.0 || b[(i, k)] != 0.0) {
                    neighbours[i].push(k);
                }
            }
        }
        Admittance { g, b, neighbours }
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    /// Net active and reactive injections into the network at each bus.
    pub fn injections(&self, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            let vi = vm[i];
            p[i] = vi * vi * self.g[(i, i)];
            q[i] = -vi * vi * self.b[(i, i)];
            for &k in &self.neighbours[i] {
                let (gik, bik) = (self.g[(i, k)], self.b[(i, k)]);
                let (s, c) = (va[i] - va[k]).sin_cos();
                let vv = vi * vm[k];
                p[i] += vv * (gik * c + bik * s);
                q[i] += vv * (gik * s - bik * c);
            }
        }
        (p, q)
    }

    /// Writes d(P_i, Q_i)/d(Theta, V) into rows `[P_0..P_n, Q_0..Q_n]` and
    /// columns `[Theta_0..Theta_n, V_0..V_n]` of `jac`.
    pub fn jacobian_into(&self, vm: &[f64], va: &[f64], jac: &mut DMatrix<f64>) {
        let n = self.len();
        for i in 0..n {
            let vi = vm[i];
            jac[(i, n + i)] += 2.0 * vi * self.g[(i, i)];
            jac[(n + i, n + i)] += -2.0 * vi * self.b[(i, i)];
            for &k in &self.neighbours[i] {
                let (gik, bik) = (self.g[(i, k)], self.b[(i, k)]);
                let vk = vm[k];
                let (s, c) = (va[i] - va[k]).sin_cos();
                let phi_p = gik * c + bik * s;
                let dphi_p = -gik * s + bik * c;
                let phi_q = gik * s - bik * c;
                let dphi_q = phi_p;
                let vv = vi * vk;
                // P row
                jac[(i, i)] += vv * dphi_p;
                jac[(i, k)] -= vv * dphi_p;
                jac[(i, n + i)] += vk * phi_p;
                jac[(i, n + k)] += vi * phi_p;
                // Q row
                jac[(n + i, i)] += vv * dphi_q;
                jac[(n + i, k)] -= vv * dphi_q;
                jac[(n + i, n + i)] += vk * phi_q;
                jac[(n + i, n + k)] += vi * phi_q;
            }
        }
    }

    /// Adds `sum_i lp_i * hess(P_i) + lq_i * hess(Q_i)` to the (Theta, V)
    /// block of `hess`, which starts at row and column 0.
    pub fn weighted_hessian_into(&self, vm: &[f64], va: &[f64], lp: &[f64], lq: &[f64], hess: &mut DMatrix<f64>) {
        let n = self.len();
        for i in 0..n {
            hess[(n + i, n + i)] += 2.0 * (lp[i] * self.g[(i, i)] - lq[i] * self.b[(i, i)]);
            for &k in &self.neighbours[i] {
                let (gik, bik) = (self.g[(i, k)], self.b[(i, k)]);
                let (vi, vk) = (vm[i], vm[k]);
                let (s, c) = (va[i] - va[k]).sin_cos();
                let phi_p = gik * c + bik * s;
                let dphi_p = -gik * s + bik * c;
                let phi_q = gik * s - bik * c;
                // combined term weights
                let phi = lp[i] * phi_p + lq[i] * phi_q;
                let dphi = lp[i] * dphi_p + lq[i] * phi_p;
                let ddphi = -lp[i] * phi_p + lq[i] * dphi_p;
                let vv = vi * vk;
                let (ti, tk, ui, uk) = (i, k, n + i, n + k);
                hess[(ti, ti)] += vv * ddphi;
                hess[(tk, tk)] += vv * ddphi;
                hess[(ti, tk)] -= vv * ddphi;
                hess[(tk, ti)] -= vv * ddphi;

                hess[(ti, ui)] += vk * dphi;
                hess[(ui, ti)] += vk * dphi;
                hess[(ti, uk)] += vi * dphi;
                hess[(uk, ti)] += vi * dphi;
                hess[(tk, ui)] -= vk * dphi;
                hess[(ui, tk)] -= vk * dphi;
                hess[(tk, uk)] -= vi * dphi;
                hess[(uk, tk)] -= vi * dphi;

                hess[(ui, uk)] += phi;
                hess[(uk, ui)] += phi;
            }
        }
    }
}

fn cdiv(ar: f64, ai: f64, br: f64, bi: f64) -> (f64, f64) {
    let den = br * br + bi * bi;
    ((ar * br + ai * bi) / den, (ai * br - ar * bi) / den)
}
