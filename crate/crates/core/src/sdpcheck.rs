//! Rank conditions under which the semidefinite relaxation of the problem is
//! tight, and the convex surrogate that certifies the tight value.
//!
//! With `M = Q − λ_min I` the surrogate is
//! `min ½xᵀMx + cᵀx + ½λ_min R` over the same feasible set. It agrees with
//! the original objective on the sphere and is a lower bound inside. When the
//! stacked matrix `[M | a₁ … a_m]` is rank deficient there is a direction `z`
//! with `Mz = 0` and `aᵢᵀz = 0`, along which a surrogate minimiser slides to
//! the sphere without changing its value, so both problems share the value.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, BallSpec, Polytope};
use crate::linalg;
use crate::model::{ProblemInstance, SolverConfig};
use crate::reduction::solve_extended;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub lambda_min: f64,
    pub dc_holds: bool,
    pub newdc_holds: bool,
    /// Numerical rank of the stacked matrix and the bound `n − 1` it is
    /// compared against.
    pub rank_bracket: (usize, usize),
    pub surrogate_value: Option<f64>,
    pub lifted_point: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub value: f64,
    pub x: DVector<f64>,
    pub ball_multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gap {
    pub exact: f64,
    pub surrogate: f64,
    pub gap: f64,
}

struct Ranks {
    lambda_min: f64,
    shifted: DMatrix<f64>,
    stacked: DMatrix<f64>,
    threshold: f64,
}

fn ranks(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Ranks> {
    let n = inst.n();
    let lambda_min = linalg::lambda_min(&inst.q)?;
    let shifted = &inst.q - DMatrix::identity(n, n) * lambda_min;
    let mut stacked = DMatrix::zeros(n, n + inst.m());
    stacked.columns_mut(0, n).copy_from(&shifted);
    stacked
        .columns_mut(n, inst.m())
        .copy_from(&inst.a.transpose());
    let threshold = linalg::scaled_threshold(&stacked, cfg.rank_tol);
    Ok(Ranks {
        lambda_min,
        shifted,
        stacked,
        threshold,
    })
}

impl Ranks {
    fn stacked_rank(&self) -> usize {
        linalg::rank_above(&self.stacked, self.threshold)
    }

    /// `dim Ker M ≥ dim span{aᵢ} + 1`. Both ranks use half the stacked
    /// threshold, which keeps the implication to the stacked condition valid
    /// in floating point.
    fn dc(&self, inst: &ProblemInstance) -> bool {
        let n = inst.n();
        let half = 0.5 * self.threshold;
        let kernel = n - linalg::rank_above(&self.shifted, half);
        let span = linalg::rank_above(&inst.a, half);
        kernel > span
    }
}

pub fn check_dc(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<bool> {
    Ok(ranks(inst, cfg)?.dc(inst))
}

pub fn check_newdc(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<bool> {
    Ok(ranks(inst, cfg)?.stacked_rank() < inst.n())
}

/// Minimises the convexified objective over the feasible set. The shift is
/// `min(λ_min, 0)`, so positive semidefinite problems are solved unchanged.
pub fn surrogate_solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Surrogate> {
    let n = inst.n();
    let shift = linalg::lambda_min(&inst.q)?.min(0.0);
    let quad = &inst.q - DMatrix::identity(n, n) * shift;
    let quad = (&quad + quad.transpose()) * 0.5;
    let poly = Polytope::new(inst.a.clone(), inst.b.clone());
    let sol = geometry::convex_minimize(
        &quad,
        &inst.c,
        &poly,
        Some(BallSpec::new(inst.radius_sq)),
        cfg,
    )?;
    Ok(Surrogate {
        value: sol.value + 0.5 * shift * inst.radius_sq + inst.constant,
        x: sol.x,
        ball_multiplier: sol.ball_multiplier,
    })
}

/// Moves `x` along `z` onto the unit sphere: `x + β z` with
/// `β = (−xᵀz + √((xᵀz)² + zᵀz(1 − xᵀx))) / zᵀz`.
pub fn lift_to_sphere(x: &DVector<f64>, z: &DVector<f64>) -> Result<DVector<f64>> {
    lift_to_radius(x, z, 1.0)
}

fn lift_to_radius(x: &DVector<f64>, z: &DVector<f64>, radius_sq: f64) -> Result<DVector<f64>> {
    if z.norm_squared() == 0.0 || !z.iter().all(|v| v.is_finite()) {
        return Err(Error::ZeroDirection);
    }
    let beta = geometry::sphere_step(x, z, radius_sq);
    Ok(x + z * beta)
}

/// Evaluates both conditions and, when the stacked condition holds, the
/// surrogate value together with a minimiser lifted onto the sphere.
pub fn certify_tightness(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<ConditionReport> {
    let r = ranks(inst, cfg)?;
    let rank = r.stacked_rank();
    let n = inst.n();
    let newdc_holds = rank < n;
    let mut report = ConditionReport {
        lambda_min: r.lambda_min,
        dc_holds: r.dc(inst),
        newdc_holds,
        rank_bracket: (rank, n.saturating_sub(1)),
        surrogate_value: None,
        lifted_point: None,
    };
    if newdc_holds {
        let sur = surrogate_solve(inst, cfg)?;
        let (mut z, _) = linalg::left_null_vector(&r.stacked);
        // orient z so a point already on the sphere stays put
        if sur.x.dot(&z) < 0.0 {
            z = -z;
        }
        report.lifted_point = Some(lift_to_radius(&sur.x, &z, inst.radius_sq)?);
        report.surrogate_value = Some(sur.value);
    }
    Ok(report)
}

/// Exact value, surrogate lower bound and their difference.
pub fn gap(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<Gap> {
    let exact = solve_extended(inst, cfg)?.value;
    let surrogate = surrogate_solve(inst, cfg)?.value;
    Ok(Gap {
        exact,
        surrogate,
        gap: exact - surrogate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{random_instance, structured_instance, Structure};
    use crate::model::{objective_value, spectral_decompose};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn inst(q: &[Vec<f64>], c: &[f64], a: &[Vec<f64>], b: &[f64]) -> ProblemInstance {
        ProblemInstance::from_rows(q, c, a, b).unwrap()
    }

    fn tight_cut() -> ProblemInstance {
        inst(
            &[vec![-2.0, 0.0], vec![0.0, 2.0]],
            &[0.0, 0.0],
            &[vec![0.0, -1.0]],
            &[0.0],
        )
    }

    fn gap_cut() -> ProblemInstance {
        inst(
            &[vec![-2.0, 0.0], vec![0.0, 2.0]],
            &[1.0, 0.0],
            &[vec![-1.0, 0.0]],
            &[0.0],
        )
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn conditions_on_examples() {
        assert!(!check_dc(&tight_cut(), &cfg()).unwrap());
        assert!(check_newdc(&tight_cut(), &cfg()).unwrap());
        assert!(!check_newdc(&gap_cut(), &cfg()).unwrap());

        let scalar = inst(
            &[vec![-1.0, 0.0], vec![0.0, -1.0]],
            &[0.0, 0.0],
            &[vec![1.0, 2.0]],
            &[0.1],
        );
        assert!(check_dc(&scalar, &cfg()).unwrap());
        assert!(check_newdc(&scalar, &cfg()).unwrap());

        let free = ProblemInstance::unconstrained(
            DMatrix::from_diagonal(&v(&[-1.0, 3.0])),
            v(&[1.0, 1.0]),
        );
        assert!(check_dc(&free, &cfg()).unwrap());
    }

    #[test]
    fn surrogate_examples() {
        let s = surrogate_solve(&gap_cut(), &cfg()).unwrap();
        assert_relative_eq!(s.value, -1.0, epsilon = 1e-10);
        assert_relative_eq!(s.x, v(&[0.0, 0.0]), epsilon = 1e-10);
        let s = surrogate_solve(&tight_cut(), &cfg()).unwrap();
        assert_relative_eq!(s.value, -1.0, epsilon = 1e-10);

        let convex = inst(
            &[vec![2.0, 0.0], vec![0.0, 1.0]],
            &[1.0, -3.0],
            &[vec![1.0, 1.0]],
            &[0.2],
        );
        let s = surrogate_solve(&convex, &cfg()).unwrap();
        let exact = solve_extended(&convex, &cfg()).unwrap();
        assert_relative_eq!(s.value, exact.value, epsilon = 1e-10);
    }

    #[test]
    fn lift_examples() {
        assert_relative_eq!(
            lift_to_sphere(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(),
            v(&[1.0, 0.0])
        );
        assert_relative_eq!(
            lift_to_sphere(&v(&[0.0, 0.5]), &v(&[0.0, 1.0])).unwrap(),
            v(&[0.0, 1.0])
        );
        let unit = v(&[0.6, 0.8]);
        assert_relative_eq!(
            lift_to_sphere(&unit, &v(&[1.0, 1.0])).unwrap(),
            unit,
            epsilon = 1e-15
        );
        assert_eq!(
            lift_to_sphere(&unit, &v(&[0.0, 0.0])),
            Err(Error::ZeroDirection)
        );
    }

    #[test]
    fn certify_examples() {
        let r = certify_tightness(&tight_cut(), &cfg()).unwrap();
        assert!(r.newdc_holds && !r.dc_holds);
        assert_eq!(r.rank_bracket, (1, 1));
        assert_relative_eq!(r.surrogate_value.unwrap(), -1.0, epsilon = 1e-10);
        let p = r.lifted_point.unwrap();
        assert_relative_eq!(p.norm(), 1.0, epsilon = 1e-12);
        assert!(p[1] >= -1e-12);

        let r = certify_tightness(&gap_cut(), &cfg()).unwrap();
        assert!(!r.newdc_holds);
        assert_eq!(r.rank_bracket, (2, 1));
        assert_eq!(r.surrogate_value, None);

        let ball = ProblemInstance::unconstrained(-DMatrix::identity(2, 2), v(&[0.0, 0.0]));
        let r = certify_tightness(&ball, &cfg()).unwrap();
        assert!(r.newdc_holds);
        assert_relative_eq!(r.surrogate_value.unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn gap_examples() {
        let g = gap(&gap_cut(), &cfg()).unwrap();
        assert_relative_eq!(g.gap, 1.0, epsilon = 1e-10);
        let g = gap(&tight_cut(), &cfg()).unwrap();
        assert_relative_eq!(g.gap, 0.0, epsilon = 1e-10);
    }

    // for one constraint the stacked condition holds exactly when the
    // smallest eigenvalue repeats or the normal is orthogonal to its
    // eigenspace
    #[test]
    fn single_constraint_characterisation() {
        for seed in 0..60 {
            let shape = match seed % 3 {
                0 => Structure::Gaussian,
                1 => Structure::RepeatedMin(2),
                _ => Structure::NormalsOrthogonalToMin,
            };
            let inst = structured_instance(4, 1, seed, shape);
            let sd = spectral_decompose(&inst, &cfg()).unwrap();
            let eigvec = sd.basis.row(0).transpose();
            let orthogonal =
                inst.a.row(0).transpose().dot(&eigvec).abs() < 1e-8 * inst.a.row(0).norm();
            let expected = sd.k >= 2 || orthogonal;
            assert_eq!(check_newdc(&inst, &cfg()).unwrap(), expected, "seed {seed}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dc_implies_newdc(seed in 0u64..100_000, n in 1usize..6, m in 0usize..4, shape in 0u8..4) {
            let shape = match shape {
                0 => Structure::Gaussian,
                1 => Structure::RepeatedMin(1 + (seed as usize % n)),
                2 => Structure::NormalsOrthogonalToMin,
                _ => Structure::LowRank(seed as usize % n),
            };
            let inst = structured_instance(n, m, seed, shape);
            let r = certify_tightness(&inst, &cfg()).unwrap();
            prop_assert!(!r.dc_holds || r.newdc_holds);
        }

        #[test]
        fn surrogate_is_lower_bound(seed in 0u64..100_000, n in 2usize..5, m in 0usize..4) {
            let inst = random_instance(n, m, seed);
            let g = gap(&inst, &cfg()).unwrap();
            prop_assert!(g.gap >= -1e-8);
        }

        #[test]
        fn tight_when_newdc_holds(seed in 0u64..100_000, n in 2usize..5, m in 1usize..3) {
            let shape = if seed % 2 == 0 { Structure::RepeatedMin(m + 1) } else { Structure::NormalsOrthogonalToMin };
            let inst = structured_instance(n.max(m + 1), m, seed, shape);
            let r = certify_tightness(&inst, &cfg()).unwrap();
            prop_assert!(r.newdc_holds);
            let exact = solve_extended(&inst, &cfg()).unwrap().value;
            let sur = r.surrogate_value.unwrap();
            prop_assert!((exact - sur).abs() <= 1e-6 * (1.0 + exact.abs()));
            let p = r.lifted_point.unwrap();
            prop_assert!((p.norm() - 1.0).abs() < 1e-8);
            prop_assert!(inst.is_feasible(&p, 1e-8));
            prop_assert!((objective_value(&inst, &p).unwrap() - sur).abs() < 1e-6 * (1.0 + sur.abs()));
        }
    }
}
