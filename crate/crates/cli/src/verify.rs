//! Quick self-checks: small versions of the property suites.

use anyhow::{bail, Result};
use evasion_core::admm::{AdmmConfig, AdmmRun, Injection, InjectionContext, Side, Termination};
use evasion_core::attacks::{
    evasion_criterion, feasibility_profile, goal_oriented, lemma4_solve, random_evasive, sign_selection, sphere_check,
    AttackFamily, AttackVector, GapVector, GoalOptions, Support,
};
use evasion_core::monitors::DetectorConfig;
use evasion_core::network::{study_case, BoundaryVector, Component};
use evasion_core::scenario::{builtin_catalog, reference_vectors, Study};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn unit(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Random `(a, y)` with `a` on the evasion sphere of `y`.
fn on_sphere(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let r = norm(&y);
    let u = unit(n, rng);
    (y.iter().zip(&u).map(|(y, u)| y + r * u).collect(), y)
}

fn criterion_agreement(rng: &mut ChaCha8Rng) -> Result<String> {
    let total = 2000;
    for i in 0..total {
        let n = rng.gen_range(1..=8);
        let (a, y) = if i % 2 == 0 {
            on_sphere(n, rng)
        } else {
            ((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        };
        let gap = GapVector::from_values(y);
        let av = AttackVector::new(a, Support::all(n), AttackFamily::Replay)?;
        if evasion_criterion(&av, &gap)?.satisfied != sphere_check(&av, &gap) {
            bail!("criterion and sphere test disagree on pair {i}");
        }
    }
    Ok(format!("{total} pairs agree"))
}

fn lemma_and_signs(rng: &mut ChaCha8Rng) -> Result<String> {
    for i in 0..50 {
        let (a, y) = on_sphere(rng.gen_range(1..=8), rng);
        let d = feasibility_profile(&a, &y)?.d;
        if lemma4_solve(&d).is_none() {
            bail!("feasible profile {i} not certified");
        }
        let best = (0..1u32 << y.len())
            .map(|mask| {
                (0..y.len())
                    .map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 } * (a[j] - y[j]).abs() * y[j])
                    .sum::<f64>()
                    .abs()
            })
            .fold(f64::INFINITY, f64::min);
        let sel = sign_selection(&a, &GapVector::from_values(y.clone()), f64::INFINITY)?;
        if (sel.orthogonality * norm(&y) - best).abs() > 1e-12 * (1.0 + best) {
            bail!("sign selection {i} misses the enumerated optimum");
        }
    }
    Ok("50 profiles certified, 50 sign searches optimal".into())
}

fn goal_vs_sampling(rng: &mut ChaCha8Rng) -> Result<String> {
    for i in 0..5 {
        let z = [rng.gen_range(0.95..1.05), rng.gen_range(-0.2..0.0), rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3)];
        let y = [rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)];
        let r = norm(&y);
        let v_u = z[0] + rng.gen_range(0.1..0.8) * (y[0] + r);
        let mut best = f64::INFINITY;
        for _ in 0..20_000 {
            let u = unit(4, rng);
            let a: Vec<f64> = y.iter().zip(&u).map(|(y, u)| y + r * u).collect();
            if z[0] + a[0] >= v_u {
                best = best.min(a.iter().map(|v| v * v).sum::<f64>() + (z[3] + a[3]).abs());
            }
        }
        let zb = BoundaryVector::from_vec(z.to_vec())?;
        let gap = GapVector::with_support(y.to_vec(), Support::all(4))?;
        let res = goal_oriented(&zb, &gap, &[4], &[4], v_u, None, &GoalOptions::default())?;
        if res.objective > best + 1e-3 {
            bail!("goal instance {i}: objective {} above sampled {best}", res.objective);
        }
    }
    Ok("5 instances at or below sampling".into())
}

fn admm_invariance(rng: &mut ChaCha8Rng) -> Result<String> {
    let study = Study::new(study_case(), AdmmConfig::default(), DetectorConfig::default())?;
    if study.clean.termination != Termination::Converged {
        bail!("clean run did not converge");
    }
    let ids = study.boundary_ids();
    for k in [3usize, 20, 50, 100, 150, 210] {
        let mut run = AdmmRun::resume(
            &study.tso,
            &study.dso,
            study.config,
            study.state_before(k).expect("stored state").clone(),
            study.clean.records[..k - 1].to_vec(),
        )?;
        let mut plan = |ctx: &InjectionContext<'_>| -> Result<Option<Injection>, String> {
            if ctx.side != Side::Z {
                return Ok(None);
            }
            let support = Support::buses(&ids, &[4], &Component::ALL).map_err(|e| e.to_string())?;
            let y = GapVector::between(ctx.x, ctx.z, support).map_err(|e| e.to_string())?;
            let a = random_evasive(&y, &mut *rng).map_err(|e| e.to_string())?;
            Ok(Some(Injection { id: "verify".into(), delta: a.to_boundary() }))
        };
        run.step(&mut plan)?;
        let attacked = run.records().last().expect("one step").r;
        let clean = study.clean.record(k).expect("clean record").r;
        if (attacked - clean).abs() > 1e-8 * clean {
            bail!("iteration {k}: residual moved from {clean:e} to {attacked:e}");
        }
    }
    Ok(format!("clean run converged in {} iterations; 6 evasive injections left r unchanged", study.clean.iterations()))
}

fn tables() -> Result<String> {
    let catalog = builtin_catalog();
    let vectors = reference_vectors();
    if catalog.len() != 83 || vectors.len() != 66 {
        bail!("catalog has {} scenarios and {} reference vectors", catalog.len(), vectors.len());
    }
    Ok("83 scenarios, 66 reference vectors".into())
}

pub fn run() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let checks: [(&str, Result<String>); 5] = [
        ("tables", tables()),
        ("criterion", criterion_agreement(&mut rng)),
        ("signs", lemma_and_signs(&mut rng)),
        ("goal", goal_vs_sampling(&mut rng)),
        ("admm", admm_invariance(&mut rng)),
    ];
    let mut failed = 0;
    for (name, outcome) in checks {
        match outcome {
            Ok(detail) => println!("ok    {name:<10} {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name:<10} {e:#}");
            }
        }
    }
    if failed > 0 {
        bail!("{failed} check(s) failed");
    }
    Ok(())
}
