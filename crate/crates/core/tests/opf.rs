mod common;

use std::collections::BTreeSet;

use common::{branch_mismatch, chain3, max_abs, study, two_bus};
use evasion_core::network::{partition, study_case, whole_network, BoundaryVector, Component, RegionKind};
use evasion_core::opf::{
    max_mismatch, power_flow_mismatch, solve_local_subproblem, solve_uncoupled, solve_with_fixed_boundary, Admittance,
    LocalSolution, SolverOptions, SubproblemSpec,
};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

#[test]
fn lossless_two_bus_dispatch_meets_the_load() {
    let case = two_bus(0.0, 0.1, 50.0, 20.0);
    let region = whole_network(&case).unwrap();
    let sol = solve_uncoupled(&region, &opts()).unwrap();
    assert!((sol.pg[0] - 0.5).abs() < 1e-6, "pg = {}", sol.pg[0]);
    assert!(max_mismatch(&region, &sol) <= 1e-6);
    assert!(max_abs(&branch_mismatch(&region, &sol)) <= 1e-6);
}

#[test]
fn zero_load_region_rests_at_flat_profile() {
    let case = two_bus(0.0, 0.1, 0.0, 0.0);
    let region = whole_network(&case).unwrap();
    let sol = solve_uncoupled(&region, &opts()).unwrap();
    assert!(sol.pg[0].abs() < 1e-6 && sol.qg[0].abs() < 1e-6);
    assert!((sol.vm[0] - sol.vm[1]).abs() < 1e-6);
    assert!(sol.va.iter().all(|a| a.abs() < 1e-6));
}

#[test]
fn two_bus_mismatch_matches_hand_evaluation() {
    let (r, x) = (0.02, 0.08);
    let case = two_bus(r, x, 60.0, 30.0);
    let region = whole_network(&case).unwrap();
    let sol = LocalSolution { vm: vec![1.04, 0.97], va: vec![0.0, -0.07], pg: vec![0.63], qg: vec![0.41], ..LocalSolution::flat(&region) };
    let den = r * r + x * x;
    let (g, b) = (r / den, -x / den);
    let (v1, v2, th) = (1.04f64, 0.97f64, 0.07f64);
    let p12 = v1 * v1 * g - v1 * v2 * (g * th.cos() + b * th.sin());
    let q12 = -v1 * v1 * b - v1 * v2 * (g * th.sin() - b * th.cos());
    let p21 = v2 * v2 * g - v1 * v2 * (g * th.cos() - b * th.sin());
    let q21 = -v2 * v2 * b + v1 * v2 * (g * th.sin() + b * th.cos());
    let want = [(0.63 - p12, 0.41 - q12), (-0.6 - p21, -0.3 - q21)];
    let got = power_flow_mismatch(&region, &sol);
    for (w, g) in want.iter().zip(&got) {
        assert!((w.0 - g.0).abs() < 1e-10 && (w.1 - g.1).abs() < 1e-10, "{w:?} vs {g:?}");
    }
}

#[test]
fn flat_start_mismatch_is_negated_load() {
    let region = whole_network(&two_bus(0.01, 0.1, 50.0, 20.0)).unwrap();
    let mm = power_flow_mismatch(&region, &LocalSolution::flat(&region));
    assert_eq!(mm, vec![(0.0, 0.0), (-0.5, -0.2)]);
}

#[test]
fn admittance_matches_branch_oracle_on_regions() {
    let (tso, dso) = (&study().tso, &study().dso);
    let rec = &study().clean.records[4];
    for (region, vm) in [(tso, &rec.tso_vm), (dso, &rec.dso_vm)] {
        let sol = LocalSolution {
            vm: vm.clone(),
            va: (0..vm.len()).map(|i| -0.01 * i as f64).collect(),
            ..LocalSolution::flat(region)
        };
        let a = power_flow_mismatch(region, &sol);
        let b = branch_mismatch(region, &sol);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.0 - y.0).abs() < 1e-12 && (x.1 - y.1).abs() < 1e-12);
        }
        assert_eq!(Admittance::build(region).len(), region.buses.len());
    }
}

#[test]
fn tso_first_iteration_is_feasible() {
    let tso = &study().tso;
    let zero = BoundaryVector::zeros(tso.boundary_len());
    let spec = SubproblemSpec { region: tso, coupling_target: &zero, dual: &zero, rho: 100.0, warm_start: None };
    let sol = solve_local_subproblem(&spec, &opts()).unwrap();
    assert!(max_abs(&branch_mismatch(tso, &sol)) <= 1e-6);
    let b = sol.boundary_vector(tso);
    for pos in 0..tso.boundary_len() {
        let v = b.get(pos, Component::V);
        assert!((0.9 - 1e-9..=1.1 + 1e-9).contains(&v), "V = {v}");
    }
}

#[test]
fn larger_rho_pulls_boundary_toward_target() {
    let case = chain3();
    let tso_buses: BTreeSet<usize> = [1, 2].into_iter().collect();
    let (tso, _) = partition(&case, &tso_buses, &[2]).unwrap();
    let target = BoundaryVector::from_vec(vec![1.02, -0.05, -0.3, -0.2]).unwrap();
    let dual = BoundaryVector::from_vec(vec![0.01, 0.0, -0.02, 0.01]).unwrap();
    let mut prev = f64::INFINITY;
    for rho in [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0] {
        let spec = SubproblemSpec { region: &tso, coupling_target: &target, dual: &dual, rho, warm_start: None };
        let sol = solve_local_subproblem(&spec, &opts()).unwrap();
        let gap = sol.boundary_vector(&tso).sub(&target).unwrap().add(&dual).unwrap().norm();
        assert!(gap <= prev + 1e-9, "rho {rho}: {gap} > {prev}");
        prev = gap;
    }
}

#[test]
fn warm_and_cold_starts_agree() {
    let s = study();
    let state = &s.clean.records[9];
    let lambda = &state.lambda;
    for (region, target, warm) in [
        (&s.tso, &state.z, s.clean.final_state.tso.as_ref()),
        (&s.dso, &state.x, s.clean.final_state.dso.as_ref()),
    ] {
        let cold = SubproblemSpec { region, coupling_target: target, dual: lambda, rho: 100.0, warm_start: None };
        let warm = SubproblemSpec { warm_start: warm, ..cold.clone() };
        let a = solve_local_subproblem(&cold, &opts()).unwrap();
        let b = solve_local_subproblem(&warm, &opts()).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-6, "{:?}: {} vs {}", region.kind, a.objective, b.objective);
    }
}

#[test]
fn fixed_coupling_reproduces_full_network_optimum() {
    let case = study_case();
    let whole = whole_network(&case).unwrap();
    let full = solve_uncoupled(&whole, &opts()).unwrap();
    let s = study();
    let (tso, dso) = (&s.tso, &s.dso);

    // Exchange through the coupling branches, read from the DSO side.
    let local = |id: usize| whole.bus_index(id).unwrap();
    let dso_sol = LocalSolution {
        vm: dso.buses.iter().map(|b| full.vm[local(b.id)]).collect(),
        va: dso.buses.iter().map(|b| full.va[local(b.id)]).collect(),
        ..LocalSolution::flat(dso)
    };
    let (p_in, q_in) = Admittance::build(dso).injections(&dso_sol.vm, &dso_sol.va);
    let mut shared = BoundaryVector::zeros(dso.boundary_len());
    for (pos, att) in dso.boundary.iter().enumerate() {
        shared.set(pos, Component::V, full.vm[local(att.bus_id)]);
        shared.set(pos, Component::Theta, full.va[local(att.bus_id)]);
        shared.set(pos, Component::P, -p_in[att.local_bus]);
        shared.set(pos, Component::Q, -q_in[att.local_bus]);
    }

    for region in [tso, dso] {
        let sol = solve_with_fixed_boundary(region, &shared, &opts()).unwrap();
        let b = sol.boundary_vector(region);
        for pos in 0..region.boundary_len() {
            for c in [Component::V, Component::P, Component::Q] {
                assert!((b.get(pos, c) - shared.get(pos, c)).abs() <= 1e-4, "{:?} {c:?}", region.kind);
            }
        }
        for (i, bus) in region.buses.iter().enumerate() {
            assert!((sol.vm[i] - full.vm[local(bus.id)]).abs() <= 1e-4, "{:?} bus {}", region.kind, bus.id);
        }
        if region.kind == RegionKind::Tso {
            for (i, bus) in region.buses.iter().enumerate() {
                assert!((sol.va[i] - full.va[local(bus.id)]).abs() <= 1e-4, "angle at bus {}", bus.id);
            }
        }
    }
}

#[test]
fn region_without_generation_is_infeasible() {
    let mut region = whole_network(&two_bus(0.01, 0.1, 50.0, 20.0)).unwrap();
    region.generators.clear();
    assert!(solve_uncoupled(&region, &opts()).is_err());
}
