//! One line per acceptance criterion, at the pinned tolerances.

use std::time::Instant;

use etrs::gen::{qps_instance, random_instance, structured_instance, Structure};
use etrs::geometry::{sphere_polytope_intersect, BallSpec, IntersectionWitness, Polytope};
use etrs::oracle::kkt_enumerate;
use etrs::sdpcheck::{certify_tightness, gap};
use etrs::trs0::{global_solve, secular_eval, GlobalSet, SecularFunction};
use etrs::{objective_value, solve_extended, ProblemInstance, SolverConfig, SpectralData};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn inst(q: &[Vec<f64>], c: &[f64], a: &[Vec<f64>], b: &[f64]) -> ProblemInstance {
    ProblemInstance::from_rows(q, c, a, b).unwrap()
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: etrs::Error) -> String {
    e.to_string()
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let p = inst(
        &[vec![-2.0, 0.0], vec![0.0, 2.0]],
        &[0.0, 0.0],
        &[vec![0.0, -1.0]],
        &[0.0],
    );
    let value = solve_extended(&p, &cfg()).map_err(err)?.value;
    let report = certify_tightness(&p, &cfg()).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let sur = report.surrogate_value.ok_or("no surrogate value")?;
    ensure((value + 1.0).abs() <= 1e-8, format!("value {value}"))?;
    ensure(!report.dc_holds && report.newdc_holds, "condition flags")?;
    ensure((sur + 1.0).abs() <= 1e-6, format!("surrogate {sur}"))?;
    ensure(elapsed < 0.1, format!("took {elapsed:.3}s"))?;
    Ok(format!("value {value}, surrogate {sur}, {elapsed:.4}s"))
}

fn criterion2() -> Outcome {
    let p = inst(
        &[vec![-2.0, 0.0], vec![0.0, 2.0]],
        &[1.0, 0.0],
        &[vec![-1.0, 0.0]],
        &[0.0],
    );
    let g = gap(&p, &cfg()).map_err(err)?;
    let report = certify_tightness(&p, &cfg()).map_err(err)?;
    ensure(g.exact.abs() <= 1e-8, format!("value {}", g.exact))?;
    ensure(!report.newdc_holds, "newdc should fail")?;
    ensure(
        (g.surrogate + 1.0).abs() <= 1e-6,
        format!("surrogate {}", g.surrogate),
    )?;
    ensure((g.gap - 1.0).abs() <= 1e-6, format!("gap {}", g.gap))?;
    Ok(format!(
        "value {}, surrogate {}, gap {}",
        g.exact, g.surrogate, g.gap
    ))
}

fn criterion3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut done = 0;
    let mut worst: f64 = 0.0;
    let mut seed = 0;
    while done < 50 {
        seed += 1;
        let n = rng.random_range(1..=8);
        let base = random_instance(n, 1, seed);
        let lmin = base.q.clone().symmetric_eigen().eigenvalues.min();
        if lmin >= 0.0 {
            continue;
        }
        let a = DMatrix::from_fn(1, n, |_, _| rng.sample(StandardNormal));
        let p = ProblemInstance::new(base.q, DVector::zeros(n), a, DVector::zeros(1));
        let value = solve_extended(&p, &cfg()).map_err(err)?.value;
        let diff = (value - 0.5 * lmin).abs();
        worst = worst.max(diff);
        ensure(
            diff <= 1e-8,
            format!("seed {seed}: {value} vs {}", 0.5 * lmin),
        )?;
        done += 1;
    }
    Ok(format!("50 instances, max deviation {worst:.2e}"))
}

/// The seeded random suite shared by the oracle and count criteria.
fn random_suite() -> Vec<ProblemInstance> {
    (0..200u64)
        .map(|seed| {
            let n = 2 + (seed % 4) as usize;
            let m = ((seed / 4) % 4) as usize;
            random_instance(n, m, 1000 + seed)
        })
        .collect()
}

fn criterion4() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, p) in random_suite().iter().enumerate() {
        let exact = solve_extended(p, &cfg()).map_err(err)?.value;
        let oracle = kkt_enumerate(p, &cfg()).map_err(err)?.value;
        let rel = (exact - oracle).abs() / (1.0 + oracle.abs());
        worst = worst.max(rel);
        ensure(
            rel <= 1e-6,
            format!("instance {i}: solver {exact}, oracle {oracle}"),
        )?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 60.0, format!("took {elapsed:.1}s"))?;
    Ok(format!(
        "200 instances, max relative gap {worst:.2e}, {elapsed:.2}s"
    ))
}

fn criterion5() -> Outcome {
    let mut checked = 0;
    let mut worst = [0usize; 3];
    let extra =
        (0..300u64).map(|s| random_instance(2 + (s % 6) as usize, 1 + (s % 2) as usize, 5000 + s));
    for p in random_suite().into_iter().chain(extra) {
        let m = p.m();
        if !(1..=2).contains(&m) {
            continue;
        }
        let solves = solve_extended(&p, &cfg()).map_err(err)?.trs0_solves;
        let bound = if m == 1 { 2 } else { 5 };
        ensure(solves <= bound, format!("m = {m} used {solves} solves"))?;
        worst[m] = worst[m].max(solves);
        checked += 1;
    }
    Ok(format!(
        "{checked} instances, max solves m=1: {}, m=2: {}",
        worst[1], worst[2]
    ))
}

fn newdc_candidate(seed: u64) -> ProblemInstance {
    let n = 2 + (seed % 4) as usize;
    let m = (seed / 4 % 3) as usize;
    let shape = match seed % 3 {
        0 => Structure::RepeatedMin(m + 1),
        1 => Structure::NormalsOrthogonalToMin,
        _ => Structure::Gaussian,
    };
    structured_instance(n.max(m + 1), m, 7000 + seed, shape)
}

fn criterion6() -> Outcome {
    let mut found = 0;
    let mut seed = 0;
    let mut worst: f64 = 0.0;
    while found < 200 {
        let p = newdc_candidate(seed);
        seed += 1;
        let report = certify_tightness(&p, &cfg()).map_err(err)?;
        if !report.newdc_holds {
            continue;
        }
        found += 1;
        let exact = solve_extended(&p, &cfg()).map_err(err)?.value;
        let sur = report.surrogate_value.ok_or("missing surrogate")?;
        let rel = (exact - sur).abs() / (1.0 + exact.abs());
        worst = worst.max(rel);
        ensure(
            rel <= 1e-6,
            format!("seed {}: exact {exact}, surrogate {sur}", seed - 1),
        )?;
        let lifted = report.lifted_point.ok_or("missing lifted point")?;
        ensure(
            (lifted.norm() - 1.0).abs() <= 1e-8,
            format!("lifted norm {}", lifted.norm()),
        )?;
        ensure(p.max_violation(&lifted) <= 1e-8, "lifted point infeasible")?;
    }
    Ok(format!(
        "200 instances (from {seed} drawn), max relative gap {worst:.2e}"
    ))
}

fn criterion7() -> Outcome {
    let mut dc_count = 0;
    for seed in 0..500u64 {
        let n = 1 + (seed % 5) as usize;
        let m = (seed / 5 % 4) as usize;
        let shape = match seed % 4 {
            0 => Structure::Gaussian,
            1 => Structure::RepeatedMin(1 + (seed / 3) as usize % n),
            2 => Structure::LowRank((seed / 7) as usize % n),
            _ => Structure::NormalsOrthogonalToMin,
        };
        let p = structured_instance(n, m, 9000 + seed, shape);
        let r = certify_tightness(&p, &cfg()).map_err(err)?;
        ensure(
            !r.dc_holds || r.newdc_holds,
            format!("seed {seed}: dc without newdc"),
        )?;
        dc_count += r.dc_holds as usize;
    }
    Ok(format!(
        "500 instances, {dc_count} with dc, no counterexample"
    ))
}

fn criterion8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_res: f64 = 0.0;
    let mut spheres = 0;
    for i in 0..500 {
        let n = rng.random_range(1..=8);
        let mut sigma: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0)
            .collect();
        sigma.sort_by(f64::total_cmp);
        let hard = i % 5 == 0 && sigma[0] < 0.0;
        let k = if hard { rng.random_range(1..=n) } else { 1 };
        let low = sigma[0];
        for s in sigma.iter_mut().take(k) {
            *s = low;
        }
        let mut d = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if hard {
            for j in 0..k {
                d[j] = 0.0;
            }
            d *= 0.1;
        }
        let k = sigma.iter().filter(|&&s| s == sigma[0]).count();
        let sd = SpectralData {
            sigma: DVector::from_vec(sigma.clone()),
            basis: DMatrix::identity(n, n),
            d,
            k,
        };
        let set = global_solve(&sd, &cfg()).map_err(err)?;
        let mu = set.mu_star();
        ensure(
            mu >= -sd.sigma[0] - 1e-10,
            format!("spectrum {i}: μ* {mu} below −σ₁"),
        )?;
        match &set {
            GlobalSet::Singleton { y_star, .. } => {
                if mu > 0.0 && mu + sd.sigma[0] > 0.0 {
                    let (phi, _) = secular_eval(&SecularFunction::new(&sd), mu).map_err(err)?;
                    worst_res = worst_res.max(phi.abs());
                    ensure(
                        phi.abs() <= 1e-10,
                        format!("spectrum {i}: residual {phi:e}"),
                    )?;
                } else {
                    ensure(
                        y_star.norm_squared() <= 1.0 + 1e-10,
                        "interior point outside ball",
                    )?;
                }
            }
            GlobalSet::Sphere { k, radius_sq, .. } => {
                spheres += 1;
                let reference = set.value(&sd);
                for _ in 0..100 {
                    let u = DVector::from_fn(*k, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let u = if u.norm() > 0.0 {
                        &u * (radius_sq.sqrt() / u.norm())
                    } else {
                        u
                    };
                    let y = set.sphere_point(&u).ok_or("sphere point")?;
                    let v = sd.objective(&y);
                    ensure(
                        (v - reference).abs() <= 1e-8,
                        format!("spectrum {i}: sphere value drift"),
                    )?;
                }
            }
        }
    }
    Ok(format!(
        "500 spectra ({spheres} hard-case spheres), max residual {worst_res:.2e}"
    ))
}

fn criterion9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut empties, mut points) = (0, 0);
    for case in 0..50 {
        let p = rng.random_range(1..=4);
        let m = rng.random_range(1..=4);
        let h = DMatrix::from_fn(m, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal) * 1.5 - 0.5);
        let poly = Polytope::new(h, g);
        let r = 0.2 + 2.0 * rng.random::<f64>();
        match sphere_polytope_intersect(&poly, BallSpec::new(r), &cfg()).map_err(err)? {
            IntersectionWitness::Point(u) => {
                points += 1;
                ensure(
                    (u.norm_squared() - r).abs() <= 1e-9 * (1.0 + r),
                    format!("case {case}: off sphere"),
                )?;
                ensure(
                    poly.contains(&u, 1e-9),
                    format!("case {case}: witness outside polytope"),
                )?;
            }
            IntersectionWitness::Empty => {
                empties += 1;
                for _ in 0..100_000 {
                    let u = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let u = &u * (r.sqrt() / u.norm());
                    ensure(
                        !poly.contains(&u, 0.0),
                        format!("case {case}: sample hits the polytope"),
                    )?;
                }
            }
        }
    }
    Ok(format!(
        "50 cases: {points} witnesses, {empties} empty answers sampled"
    ))
}

fn criterion10() -> Outcome {
    let p = qps_instance(&DMatrix::identity(2, 2)).map_err(err)?;
    ensure(
        p.n() == 1 && p.m() == 2,
        format!("shape n={} m={}", p.n(), p.m()),
    )?;
    let rep = solve_extended(&p, &cfg()).map_err(err)?;
    ensure(
        (rep.value - 0.5).abs() <= 1e-8,
        format!("value {}", rep.value),
    )?;
    for n in 2..6 {
        let q = qps_instance(&DMatrix::identity(n, n)).map_err(err)?;
        ensure(q.n() == n - 1 && q.m() == n, format!("shape for n = {n}"))?;
        let v = solve_extended(&q, &cfg()).map_err(err)?.value;
        // min ‖x‖² over the simplex is 1/n
        ensure((v - 1.0 / n as f64).abs() <= 1e-8, format!("n = {n}: {v}"))?;
    }
    let x = rep.x.ok_or("missing point")?;
    let check = objective_value(&p, &x).map_err(err)?;
    Ok(format!("value {check} at y = {}", x[0]))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("example with a tight relaxation", criterion1),
        ("example with a relaxation gap", criterion2),
        (
            "halfspace through the origin gives half the smallest eigenvalue",
            criterion3,
        ),
        ("agreement with the enumeration oracle", criterion4),
        ("trust region solve counts", criterion5),
        ("tightness under the stacked rank condition", criterion6),
        (
            "dimension condition implies the stacked condition",
            criterion7,
        ),
        ("secular kernel residuals and sphere constancy", criterion8),
        ("sphere-polytope witnesses and empty answers", criterion9),
        ("standard quadratic program reformulation", criterion10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("[PASS] criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name} ({why})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
