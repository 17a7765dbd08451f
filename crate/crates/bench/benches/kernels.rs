use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use evasion_core::admm::{AdmmConfig, AdmmRun, NoInjection};
use evasion_core::attacks::{goal_oriented, random_evasive, sign_selection, GapVector, GoalOptions, Support};
use evasion_core::monitors::DetectorConfig;
use evasion_core::network::{study_case, BoundaryVector};
use evasion_core::opf::{solve_local_subproblem, SolverOptions, SubproblemSpec};
use evasion_core::scenario::{builtin, Study};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn subproblems(c: &mut Criterion) {
    let study = Study::new(study_case(), AdmmConfig::default(), DetectorConfig::default()).unwrap();
    let rec = study.clean.record(20).unwrap();
    let opts = SolverOptions::default();
    for (name, region, target) in [("tso_subproblem", &study.tso, &rec.z), ("dso_subproblem", &study.dso, &rec.x)] {
        let spec = SubproblemSpec { region, coupling_target: target, dual: &rec.lambda, rho: 100.0, warm_start: None };
        c.bench_function(name, |b| b.iter(|| solve_local_subproblem(black_box(&spec), &opts).unwrap()));
    }
    let state = study.state_before(20).unwrap().clone();
    let records = study.clean.records[..19].to_vec();
    c.bench_function("admm_iteration", |b| {
        b.iter_batched(
            || AdmmRun::resume(&study.tso, &study.dso, study.config, state.clone(), records.clone()).unwrap(),
            |mut run| run.step(&mut NoInjection).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let spec = builtin(18).unwrap();
    c.bench_function("proposition1_trial", |b| b.iter(|| study.run_trial(black_box(&spec), 0).unwrap()));
}

fn attacks(c: &mut Criterion) {
    let y = GapVector::from_values(vec![0.02, -0.01, 0.4, 0.03, -0.01, 0.02, 0.3, -0.05]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("random_evasive_d8", |b| b.iter(|| random_evasive(black_box(&y), &mut rng).unwrap()));

    let ys: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1 + 0.01).collect();
    let r = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
    let a: Vec<f64> = ys.iter().enumerate().map(|(i, v)| v + r / 12f64.sqrt() * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let gy = GapVector::from_values(ys);
    c.bench_function("sign_selection_d12", |b| b.iter(|| sign_selection(black_box(&a), &gy, f64::INFINITY).unwrap()));

    let z = BoundaryVector::from_vec(vec![1.0, -0.1, 0.2, 0.1]).unwrap();
    let gap = GapVector::with_support(vec![0.03, -0.01, 0.02, 0.04], Support::all(4)).unwrap();
    c.bench_function("goal_oriented_d4", |b| {
        b.iter(|| goal_oriented(black_box(&z), &gap, &[4], &[4], 1.02, None, &GoalOptions::default()).unwrap())
    });
}

criterion_group!(benches, subproblems, attacks);
criterion_main!(benches);
