//! Brute-force reference solvers for small instances.
//!
//! [`kkt_enumerate`] visits every linearly independent set of constraints
//! held at equality and collects all stationary points of the objective on
//! the resulting affine slice, both with the ball inactive and on the
//! sphere. The global minimiser is always among them. [`grid_polish`]
//! samples a grid and refines the best points, giving an upper bound.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{self, BallSpec, IntersectionWitness, Polytope};
use crate::linalg;
use crate::model::{objective_value, validate_instance, ProblemInstance, SolverConfig};

pub const KKT_MAX_DIM: usize = 8;
pub const KKT_MAX_ROWS: usize = 5;
pub const GRID_MAX_DIM: usize = 4;
pub const GRID_MAX_POINTS: u128 = 5_000_000;

const BISECT_ITER: usize = 400;
const POLISH_STARTS: usize = 8;
const POLISH_ITER: usize = 3000;
const DYKSTRA_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    KktEnum,
    GridPolish,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub x: DVector<f64>,
    pub candidates_examined: usize,
    pub method: OracleMethod,
}

/// Running minimum with a lexicographic tie-break on `x`.
struct Best<'a> {
    inst: &'a ProblemInstance,
    tol: f64,
    examined: usize,
    best: Option<(f64, DVector<f64>)>,
}

impl<'a> Best<'a> {
    fn new(inst: &'a ProblemInstance, tol: f64) -> Self {
        Self {
            inst,
            tol,
            examined: 0,
            best: None,
        }
    }

    fn feasible(&self, x: &DVector<f64>) -> bool {
        let inst = self.inst;
        x.norm_squared() <= inst.radius_sq * (1.0 + self.tol)
            && (0..inst.m()).all(|i| {
                inst.a.row(i).transpose().dot(x) <= inst.b[i] + self.tol * (1.0 + inst.b[i].abs())
            })
    }

    fn offer(&mut self, x: DVector<f64>) -> Result<()> {
        self.examined += 1;
        if !x.iter().all(|v| v.is_finite()) || !self.feasible(&x) {
            return Ok(());
        }
        let value = objective_value(self.inst, &x)?;
        let better = match &self.best {
            None => true,
            Some((bv, bx)) => value < *bv || (value == *bv && lex_cmp(&x, bx).is_lt()),
        };
        if better {
            self.best = Some((value, x));
        }
        Ok(())
    }

    fn finish(self, method: OracleMethod) -> Result<OracleResult> {
        let examined = self.examined;
        self.best
            .map(|(value, x)| OracleResult {
                value,
                x,
                candidates_examined: examined,
                method,
            })
            .ok_or(Error::Infeasible)
    }
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Exact minimum by enumeration of stationary points over all active sets.
pub fn kkt_enumerate(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<OracleResult> {
    let inst = validate_instance(inst, cfg)?;
    let (n, m) = (inst.n(), inst.m());
    if n > KKT_MAX_DIM {
        return Err(Error::BudgetExceeded {
            what: "oracle dimension",
            count: n as u128,
            limit: KKT_MAX_DIM as u128,
        });
    }
    if m > KKT_MAX_ROWS {
        return Err(Error::BudgetExceeded {
            what: "oracle constraints",
            count: m as u128,
            limit: KKT_MAX_ROWS as u128,
        });
    }
    let mut best = Best::new(&inst, cfg.feas_tol);
    for size in 0..=m.min(n) {
        for subset in (0..m).combinations(size) {
            slice_candidates(&inst, &subset, cfg, &mut best)?;
        }
    }
    best.finish(OracleMethod::KktEnum)
}

/// Stationary points of `f` on `{aᵢᵀx = bᵢ, i ∈ subset}` and on its
/// intersection with the sphere.
fn slice_candidates(
    inst: &ProblemInstance,
    subset: &[usize],
    cfg: &SolverConfig,
    best: &mut Best,
) -> Result<()> {
    let n = inst.n();
    let a_s = linalg::select_rows(&inst.a, subset);
    let b_s = linalg::select_entries(&inst.b, subset);
    if !subset.is_empty() {
        let smin = linalg::singular_values(&a_s)
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let smax = linalg::singular_values(&a_s)
            .iter()
            .copied()
            .fold(0.0, f64::max);
        if smin <= cfg.rank_tol * smax * n as f64 {
            return Ok(());
        }
    }
    let Some(x0) = linalg::min_norm_solution(&a_s, &b_s) else {
        return Ok(());
    };
    let rho = inst.radius_sq - x0.norm_squared();
    if rho < -cfg.feas_tol * inst.radius_sq {
        return Ok(());
    }
    best.offer(x0.clone())?;
    let basis = linalg::null_space(&a_s, cfg.rank_tol);
    let p = basis.ncols();
    if p == 0 || rho <= 0.0 {
        return Ok(());
    }

    // reduced objective ½wᵀHw + gᵀw on the slice x = x0 + N w
    let h = basis.transpose() * &inst.q * &basis;
    let h = (&h + h.transpose()) * 0.5;
    let g = basis.transpose() * (&inst.q * &x0 + &inst.c);
    let to_x = |w: &DVector<f64>| &x0 + &basis * w;

    // ball inactive: stationary points of the free quadratic
    let svd = h.clone().svd(true, true);
    let thr = cfg.rank_tol * svd.singular_values.max().max(1.0) * p as f64;
    if let Ok(w) = svd.solve(&(-&g), thr) {
        if (&h * &w + &g).norm() <= 1e-9 * (1.0 + g.norm()) {
            best.offer(to_x(&w))?;
        }
    }

    // ball active: (H + μI)w = −g with ‖w‖² = ρ
    let (vals, vecs) = linalg::sym_eigen_sorted(&h)?;
    let d = vecs.transpose() * &g;
    let zero_d = 1e-10 * (1.0 + g.norm());
    let poles: Vec<f64> = {
        let mut ps: Vec<f64> = (0..p)
            .filter(|&i| d[i].abs() > zero_d)
            .map(|i| -vals[i])
            .collect();
        ps.sort_by(f64::total_cmp);
        ps.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
        ps
    };
    let psi = |mu: f64| -> f64 {
        (0..p)
            .filter(|&i| d[i].abs() > zero_d)
            .map(|i| (d[i] / (vals[i] + mu)).powi(2))
            .sum::<f64>()
    };
    let point = |mu: f64| -> DVector<f64> {
        let mut y = DVector::zeros(p);
        for i in 0..p {
            if d[i].abs() > zero_d {
                y[i] = -d[i] / (vals[i] + mu);
            }
        }
        let norm2 = y.norm_squared();
        if norm2 > 0.0 {
            y *= (rho / norm2).sqrt();
        }
        &vecs * y
    };
    let dnorm2: f64 = d.iter().filter(|v| v.abs() > zero_d).map(|v| v * v).sum();
    for mu in secular_roots(&poles, &psi, rho, dnorm2) {
        best.offer(to_x(&point(mu)))?;
    }

    // eigenvalues whose components of g vanish: spheres of stationary points
    let mut i = 0;
    while i < p {
        let mut j = i + 1;
        while j < p && vals[j] - vals[i] <= cfg.cluster_tol * (1.0 + vals[i].abs()) {
            j += 1;
        }
        if (i..j).all(|t| d[t].abs() <= zero_d) {
            hard_sphere(
                inst,
                &x0,
                &basis,
                &vals,
                &vecs,
                &d,
                zero_d,
                i..j,
                rho,
                cfg,
                best,
            )?;
        }
        i = j;
    }
    Ok(())
}

/// Roots of `ψ(μ) = ρ` on every pole-free interval. `ψ` is a sum of
/// `dᵢ²/(hᵢ+μ)²`, convex between consecutive poles, and bounded by
/// `dnorm2 / dist(μ, poles)²`, which gives the outer brackets.
fn secular_roots(poles: &[f64], psi: &impl Fn(f64) -> f64, rho: f64, dnorm2: f64) -> Vec<f64> {
    if poles.is_empty() {
        return Vec::new();
    }
    let reach = (dnorm2 / rho).sqrt() + 1.0;
    let mut roots = Vec::new();
    let first = poles[0];
    let last = *poles.last().expect("nonempty");
    // left of all poles ψ increases, right of all poles it decreases
    roots.push(bisect(|mu| psi(mu) - rho, first - reach, first, true));
    roots.push(bisect(|mu| psi(mu) - rho, last, last + reach, false));
    for w in poles.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        // minimiser of the convex ψ via bisection on a difference quotient
        let (mut a, mut b) = (lo, hi);
        for _ in 0..BISECT_ITER {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let step = 1e-7 * (b - a).max(f64::EPSILON);
            if psi(mid + step) < psi(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        let mid = 0.5 * (a + b);
        let low = psi(mid);
        if low > rho * (1.0 + 1e-12) {
            continue;
        }
        if low >= rho * (1.0 - 1e-12) {
            roots.push(mid);
            continue;
        }
        roots.push(bisect(|mu| psi(mu) - rho, lo, mid, false));
        roots.push(bisect(|mu| psi(mu) - rho, mid, hi, true));
    }
    roots
}

/// Root of `f` on `(lo, hi)` by bisection, for `f` monotone in the stated
/// direction with a sign change across the interval.
fn bisect(f: impl Fn(f64) -> f64, lo: f64, hi: f64, increasing: bool) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..BISECT_ITER {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let v = f(mid);
        if !v.is_finite() {
            // on a pole: move away from it
            if mid - lo < hi - mid {
                a = mid;
            } else {
                b = mid;
            }
            continue;
        }
        if (v < 0.0) == increasing {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Points on the sphere of stationary points belonging to eigenvalue block
/// `cluster` of the reduced Hessian, one for each pole-free component that
/// meets the remaining constraints.
#[allow(clippy::too_many_arguments)]
fn hard_sphere(
    inst: &ProblemInstance,
    x0: &DVector<f64>,
    basis: &DMatrix<f64>,
    vals: &DVector<f64>,
    vecs: &DMatrix<f64>,
    d: &DVector<f64>,
    zero_d: f64,
    cluster: std::ops::Range<usize>,
    rho: f64,
    cfg: &SolverConfig,
    best: &mut Best,
) -> Result<()> {
    let p = vals.len();
    let mu = -vals[cluster.start];
    let mut tail = DVector::zeros(p);
    for i in (0..p).filter(|i| !cluster.contains(i)) {
        let gap = vals[i] + mu;
        if d[i].abs() > zero_d {
            if gap.abs() <= f64::EPSILON * (1.0 + mu.abs()) {
                return Ok(());
            }
            tail[i] = -d[i] / gap;
        }
    }
    let r2 = rho - tail.norm_squared();
    if r2 < -cfg.feas_tol {
        return Ok(());
    }
    let k = cluster.len();
    let base = x0 + basis * (vecs * &tail);
    if r2 <= cfg.feas_tol {
        return best.offer(base);
    }
    // x = base + D u; the constraints A x ≤ b become H u ≤ g
    let dmat = basis * vecs.columns(cluster.start, k);
    let poly = Polytope::new(&inst.a * &dmat, &inst.b - &inst.a * &base);
    match geometry::sphere_polytope_intersect(&poly, BallSpec::new(r2), cfg)? {
        IntersectionWitness::Point(u) => best.offer(base + dmat * u),
        IntersectionWitness::Empty => {
            best.examined += 1;
            Ok(())
        }
    }
}

/// Upper bound from the best points of a grid of spacing `2√R / density`
/// over the bounding box, refined by projected gradient descent.
pub fn grid_polish(
    inst: &ProblemInstance,
    density: usize,
    cfg: &SolverConfig,
) -> Result<OracleResult> {
    let inst = validate_instance(inst, cfg)?;
    let n = inst.n();
    if n > GRID_MAX_DIM {
        return Err(Error::BudgetExceeded {
            what: "grid dimension",
            count: n as u128,
            limit: GRID_MAX_DIM as u128,
        });
    }
    let density = density.max(1);
    let per_axis = density as u128 + 1;
    let total = per_axis.checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > GRID_MAX_POINTS {
        return Err(Error::BudgetExceeded {
            what: "grid points",
            count: total,
            limit: GRID_MAX_POINTS,
        });
    }
    let radius = inst.radius_sq.sqrt();
    let spacing = 2.0 * radius / density as f64;
    let mut best = Best::new(&inst, cfg.feas_tol);
    let mut starts: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let x = DVector::from_fn(n, |i, _| -radius + spacing * idx[i] as f64);
        if best.feasible(&x) {
            let value = objective_value(&inst, &x)?;
            starts.push((value, x.clone()));
            if starts.len() > 4 * POLISH_STARTS {
                keep_best(&mut starts);
            }
        }
        best.offer(x)?;
        // odometer increment
        let mut axis = 0;
        while axis < n {
            idx[axis] += 1;
            if idx[axis] <= density {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
        if axis == n {
            break;
        }
    }
    keep_best(&mut starts);
    let poly = Polytope::new(inst.a.clone(), inst.b.clone());
    let ball = BallSpec::new(inst.radius_sq);
    let lipschitz = linalg::singular_values(&inst.q)
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let step = 1.0 / lipschitz.max(1e-12);
    for (_, x) in starts {
        best.offer(polish(&inst, x, &poly, ball, step))?;
    }
    best.finish(OracleMethod::GridPolish)
}

fn keep_best(starts: &mut Vec<(f64, DVector<f64>)>) {
    starts.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_cmp(&a.1, &b.1)));
    starts.truncate(POLISH_STARTS);
}

fn polish(
    inst: &ProblemInstance,
    mut x: DVector<f64>,
    poly: &Polytope,
    ball: BallSpec,
    step: f64,
) -> DVector<f64> {
    for _ in 0..POLISH_ITER {
        let grad = &inst.q * &x + &inst.c;
        let next = geometry::project_dykstra(&(&x - grad * step), poly, ball, DYKSTRA_ITER, 1e-15);
        let moved = (&next - &x).norm();
        x = next;
        if moved <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
    }
    x
}
