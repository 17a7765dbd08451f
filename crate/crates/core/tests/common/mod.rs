//! Shared fixtures and independent oracles for the integration suites.
#![allow(dead_code)]

use std::sync::OnceLock;

use evasion_core::admm::AdmmConfig;
use evasion_core::monitors::DetectorConfig;
use evasion_core::network::{parse_matpower_case, study_case, NetworkCase, RegionModel};
use evasion_core::opf::LocalSolution;
use evasion_core::scenario::Study;
use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Clean study on the split 14-bus case with default settings, built once.
pub fn study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| Study::new(study_case(), AdmmConfig::default(), DetectorConfig::default()).expect("clean study"))
}

/// Slack bus 1 with one generator, load at bus 2, one series branch.
pub fn two_bus(r: f64, x: f64, pd_mw: f64, qd_mvar: f64) -> NetworkCase {
    let text = format!(
        "mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	{pd_mw}	{qd_mvar}	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	300	0;
];
mpc.branch = [
	1	2	{r}	{x}	0	0	0	0	0	0	1;
];
mpc.gencost = [
	2	0	0	3	0.01	10	0;
];
"
    );
    parse_matpower_case(&text).expect("two-bus case")
}

/// Three buses in a line, generator at 1, load at 3.
pub fn chain3() -> NetworkCase {
    parse_matpower_case(
        "mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	0	1	1.1	0.9;
	2	1	10	5	0	0	1	1	0	0	1	1.1	0.9;
	3	1	40	10	0	0	1	1	0	0	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	300	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.02	0	0	0	0	0	1;
	2	3	0.02	0.15	0.02	0	0	0	0	0	1;
];
mpc.gencost = [
	2	0	0	3	0.02	12	0;
];
",
    )
    .expect("chain case")
}

/// Per-bus `(dP, dQ)` evaluated branch by branch from the pi model, without
/// the library's admittance matrix.
pub fn branch_mismatch(region: &RegionModel, sol: &LocalSolution) -> Vec<(f64, f64)> {
    let v: Vec<Complex<f64>> = sol.vm.iter().zip(&sol.va).map(|(&m, &a)| Complex::from_polar(m, a)).collect();
    let mut s_out = vec![Complex::new(0.0, 0.0); v.len()];
    for br in &region.branches {
        let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
        let half = Complex::new(0.0, br.b / 2.0);
        let t = Complex::from_polar(br.tap(), br.shift);
        let (f, to) = (br.from, br.to);
        let i_f = (ys + half) / (t * t.conj()) * v[f] - ys / t.conj() * v[to];
        let i_t = (ys + half) * v[to] - ys / t * v[f];
        s_out[f] += v[f] * i_f.conj();
        s_out[to] += v[to] * i_t.conj();
    }
    let mut out: Vec<(f64, f64)> = region
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let shunt = Complex::new(b.gs, -b.bs) * v[i].norm_sqr();
            (-b.pd - s_out[i].re - shunt.re, -b.qd - s_out[i].im - shunt.im)
        })
        .collect();
    for (g, gen) in region.generators.iter().enumerate() {
        out[gen.bus].0 += sol.pg[g];
        out[gen.bus].1 += sol.qg[g];
    }
    out
}

pub fn max_abs(pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().fold(0.0f64, |m, &(p, q)| m.max(p.abs()).max(q.abs()))
}

/// Minimum `|sum_j s_j |a_j - y_j| y_j|` over all sign patterns, by plain
/// enumeration.
pub fn brute_force_signs(a: &[f64], y: &[f64]) -> f64 {
    let n = a.len();
    (0..1u64 << n)
        .map(|mask| {
            (0..n)
                .map(|j| {
                    let s = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
                    s * (a[j] - y[j]).abs() * y[j]
                })
                .sum::<f64>()
                .abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Uniform point on the unit sphere in `n` dimensions.
pub fn unit_sphere<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// Goal objective `||a||^2 + |z_q + a_q|` for a single bus `[V, Theta, p, q]`.
pub fn goal_objective(z: &[f64; 4], a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>() + (z[3] + a[3]).abs()
}

/// Best objective over `samples` uniform points of the evasion sphere that
/// satisfy `z_V + a_V >= v_u`. `None` if no sample is feasible.
pub fn sphere_oracle<R: Rng>(z: &[f64; 4], y: &[f64; 4], v_u: f64, samples: usize, rng: &mut R) -> Option<f64> {
    let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best: Option<f64> = None;
    for _ in 0..samples {
        let u = unit_sphere(4, rng);
        let a: Vec<f64> = y.iter().zip(&u).map(|(y, u)| y + r * u).collect();
        if z[0] + a[0] >= v_u {
            let f = goal_objective(z, &a);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}
