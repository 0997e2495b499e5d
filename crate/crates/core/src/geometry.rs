//! Polytope analysis and the sphere–polytope intersection decision procedure.
//!
//! A polytope is `L = {u ∈ Rᵖ : H u ≤ g}` and a ball is `{u : uᵀu ≤ r}`.
//! The decision procedure [`sphere_polytope_intersect`] answers whether
//! `L ∩ {uᵀu = r}` is empty and produces a witness point otherwise:
//!
//! 1. project the origin onto `L`; a projection outside the ball separates
//!    the two sets, one on the sphere is already a witness;
//! 2. from an interior projection, walk to the sphere along a null direction
//!    of `H` (column-dependent `H`) or along an extreme ray found by a small
//!    LP (unbounded `L`);
//! 3. a bounded `L` is settled by its vertices: all strictly inside the ball
//!    means empty, otherwise the segment to an outside vertex crosses the
//!    sphere.
//!
//! The LP and convex QP engines used by the procedure live here as well.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::SolverConfig;
use crate::trs0::bracketed_root;

/// `{u : H u ≤ g}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl Polytope {
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        assert_eq!(h.nrows(), g.len(), "H and g disagree on the row count");
        Self { h, g }
    }

    /// The whole space `Rᵖ`.
    pub fn unconstrained(p: usize) -> Self {
        Self::new(DMatrix::zeros(0, p), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        (&self.h * u - &self.g).iter().all(|&v| v <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSpec {
    pub radius_sq: f64,
}

impl BallSpec {
    pub fn new(radius_sq: f64) -> Self {
        assert!(radius_sq > 0.0, "ball radius must be positive");
        Self { radius_sq }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IntersectionWitness {
    Empty,
    Point(DVector<f64>),
}

// ---------------------------------------------------------------------------
// Linear programming
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: DVector<f64> },
    Unbounded,
    Infeasible,
}

const PIVOT_EPS: f64 = 1e-11;

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    ncols: usize,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimises `cost · x` over the current basis with Bland's rule.
    /// Returns `false` when unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        loop {
            let entering = (0..self.ncols).find(|&j| {
                if !allowed[j] || self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.rows[i][j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS
            });
            let Some(col) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(r) / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-14
                                || (ratio <= lratio + 1e-14 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

/// Dense two-phase simplex for `min costᵀu  s.t.  H u ≤ g`, optionally with
/// the box `‖u‖∞ ≤ bound`.
pub fn lp_minimize(cost: &DVector<f64>, poly: &Polytope, bound: Option<f64>) -> LpOutcome {
    let p = poly.dim();
    assert_eq!(
        cost.len(),
        p,
        "cost length must match the polytope dimension"
    );

    let mut h_rows: Vec<Vec<f64>> = poly
        .h
        .row_iter()
        .map(|r| r.iter().cloned().collect())
        .collect();
    let mut rhs: Vec<f64> = poly.g.iter().cloned().collect();
    if let Some(bound) = bound {
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            h_rows.push(e.clone());
            rhs.push(bound);
            e[j] = -1.0;
            h_rows.push(e);
            rhs.push(bound);
        }
    }
    let m = h_rows.len();
    // columns: u⁺ (p), u⁻ (p), slacks (m), artificials (m)
    let n_struct = 2 * p + m;
    let ncols = n_struct + m;
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; ncols + 1];
        for j in 0..p {
            row[j] = sign * h_rows[i][j];
            row[p + j] = -sign * h_rows[i][j];
        }
        row[2 * p + i] = sign;
        row[n_struct + i] = 1.0;
        row[ncols] = sign * rhs[i];
        rows.push(row);
        basis.push(n_struct + i);
    }
    let mut tab = Tableau { rows, basis, ncols };

    // phase 1
    let mut phase1_cost = vec![0.0; ncols];
    for c in phase1_cost.iter_mut().skip(n_struct) {
        *c = 1.0;
    }
    let all = vec![true; ncols];
    tab.optimise(&phase1_cost, &all);
    let infeasibility: f64 = (0..m)
        .filter(|&r| tab.basis[r] >= n_struct)
        .map(|r| tab.rhs(r))
        .sum();
    let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if infeasibility > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    for r in 0..m {
        if tab.basis[r] >= n_struct {
            if let Some(c) = (0..n_struct).find(|&c| tab.rows[r][c].abs() > PIVOT_EPS) {
                tab.pivot(r, c);
            }
        }
    }

    // phase 2
    let mut phase2_cost = vec![0.0; ncols];
    for j in 0..p {
        phase2_cost[j] = cost[j];
        phase2_cost[p + j] = -cost[j];
    }
    let mut allowed = vec![true; ncols];
    for a in allowed.iter_mut().skip(n_struct) {
        *a = false;
    }
    if !tab.optimise(&phase2_cost, &allowed) {
        return LpOutcome::Unbounded;
    }
    let mut x = DVector::zeros(p);
    for (r, &b) in tab.basis.iter().enumerate() {
        if b < p {
            x[b] += tab.rhs(r);
        } else if b < 2 * p {
            x[b - p] -= tab.rhs(r);
        }
    }
    LpOutcome::Optimal {
        value: cost.dot(&x),
        x,
    }
}

// ---------------------------------------------------------------------------
// Polytope structure
// ---------------------------------------------------------------------------

/// Whether the columns of `H` are linearly dependent.
pub fn column_dependence_check(h: &DMatrix<f64>, rank_tol: f64) -> bool {
    let p = h.ncols();
    if p == 0 {
        return false;
    }
    if h.nrows() < p {
        return true;
    }
    linalg::rank_above(h, linalg::scaled_threshold(h, rank_tol)) < p
}

#[derive(Debug, Clone, PartialEq)]
pub enum Boundedness {
    Bounded,
    UnboundedAlong(DVector<f64>),
}

/// Decides boundedness of a nonempty polytope with column-independent `H` via
/// `min eᵀH u  s.t.  H u ≤ 0, ‖u‖∞ ≤ 1`.
pub fn boundedness_probe(poly: &Polytope, u0: &DVector<f64>, cfg: &SolverConfig) -> Boundedness {
    debug_assert!(poly.contains(u0, 1e3 * cfg.feas_tol), "u0 must be feasible");
    let p = poly.dim();
    let cost = poly.h.row_sum().transpose();
    let cone = Polytope::new(poly.h.clone(), DVector::zeros(poly.rows()));
    match lp_minimize(&cost, &cone, Some(1.0)) {
        LpOutcome::Optimal { value, x } if value < -cfg.feas_tol => Boundedness::UnboundedAlong(x),
        LpOutcome::Optimal { .. } => Boundedness::Bounded,
        // the box keeps the LP bounded and u = 0 is feasible
        LpOutcome::Unbounded | LpOutcome::Infeasible => {
            unreachable!("recession LP in dimension {p} is feasible and bounded")
        }
    }
}

/// All vertices of a bounded polytope, from every `p`-subset of rows whose
/// normals are linearly independent.
pub fn enumerate_vertices(poly: &Polytope, cfg: &SolverConfig) -> Result<Vec<DVector<f64>>> {
    let (m, p) = (poly.rows(), poly.dim());
    let count = linalg::binomial(m, p);
    if count > cfg.max_vertex_enum as u128 {
        return Err(Error::BudgetExceeded {
            what: "vertex enumeration",
            count,
            limit: cfg.max_vertex_enum as u128,
        });
    }
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for subset in (0..m).combinations(p) {
        let sub = linalg::select_rows(&poly.h, &subset);
        let sv = linalg::singular_values(&sub);
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smin > cfg.rank_tol * smax * p as f64) {
            continue;
        }
        let rhs = linalg::select_entries(&poly.g, &subset);
        let Some(u) = sub.lu().solve(&rhs) else {
            continue;
        };
        if !poly.contains(&u, cfg.feas_tol) {
            continue;
        }
        if vertices.iter().all(|v| (v - &u).amax() > cfg.feas_tol) {
            vertices.push(u);
        }
    }
    Ok(vertices)
}

// ---------------------------------------------------------------------------
// Convex quadratic minimisation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub value: f64,
    pub x: DVector<f64>,
    /// Multiplier of the ball constraint, zero when it is inactive or absent.
    pub ball_multiplier: f64,
    /// Rows fixed to equality in the winning active set.
    pub active: Vec<usize>,
}

/// Minimises `½ uᵀ P u + qᵀu` over the polytope, optionally intersected with
/// a centred ball, for positive semidefinite `P`.
///
/// The minimiser is found exactly by enumerating active sets: for every
/// linearly independent set of rows held at equality, the stationary points
/// on that affine subspace with the ball inactive (minimum-norm solution) and
/// active (positive secular root) are candidates, and the feasible one with
/// the lowest value wins. Some minimiser of a convex problem always has this
/// form.
pub fn convex_minimize(
    quad: &DMatrix<f64>,
    lin: &DVector<f64>,
    poly: &Polytope,
    ball: Option<BallSpec>,
    cfg: &SolverConfig,
) -> Result<ConvexSolution> {
    let p = lin.len();
    assert_eq!(quad.shape(), (p, p), "quadratic form must be p×p");
    assert_eq!(poly.dim(), p, "polytope dimension must match");
    let m = poly.rows();
    let qnorm = quad.norm().max(1.0);
    let lmin = linalg::lambda_min(quad)?;
    if lmin < -cfg.rank_tol * qnorm * (p.max(1) as f64) {
        return Err(Error::NotConvex(lmin));
    }

    let count: u128 = (0..=m.min(p)).map(|k| linalg::binomial(m, k)).sum();
    if count > cfg.max_vertex_enum as u128 {
        return Err(Error::BudgetExceeded {
            what: "active-set enumeration",
            count,
            limit: cfg.max_vertex_enum as u128,
        });
    }

    if ball.is_none() {
        match lp_minimize(&DVector::zeros(p), poly, None) {
            LpOutcome::Infeasible => return Err(Error::Infeasible),
            _ => {
                if has_descent_ray(quad, lin, poly, cfg) {
                    return Err(Error::Unbounded);
                }
            }
        }
    }

    let objective = |u: &DVector<f64>| 0.5 * u.dot(&(quad * u)) + lin.dot(u);
    let feasible = |u: &DVector<f64>| {
        poly.contains(u, cfg.feas_tol)
            && ball.is_none_or(|b| u.norm_squared() <= b.radius_sq + cfg.feas_tol)
    };

    let mut best: Option<ConvexSolution> = None;
    let mut offer = |u: DVector<f64>, mult: f64, active: &[usize]| {
        if !u.iter().all(|v| v.is_finite()) || !feasible(&u) {
            return;
        }
        let value = objective(&u);
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(ConvexSolution {
                value,
                x: u,
                ball_multiplier: mult,
                active: active.to_vec(),
            });
        }
    };

    for size in 0..=m.min(p) {
        for subset in (0..m).combinations(size) {
            let hs = linalg::select_rows(&poly.h, &subset);
            let gs = linalg::select_entries(&poly.g, &subset);
            let null = linalg::null_space(&hs, cfg.rank_tol);
            if null.ncols() != p - size {
                continue;
            }
            let Some(u0) = linalg::min_norm_solution(&hs, &gs) else {
                continue;
            };
            let rho = ball.map(|b| b.radius_sq - u0.norm_squared());
            if rho.is_some_and(|r| r < -cfg.feas_tol) {
                continue;
            }
            if null.ncols() == 0 || rho.is_some_and(|r| r <= cfg.feas_tol) {
                offer(u0, 0.0, &subset);
                continue;
            }
            let hr = null.transpose() * quad * &null;
            let hr = (&hr + hr.transpose()) * 0.5;
            let gr = null.transpose() * (quad * &u0 + lin);
            let (lam, vecs) = linalg::sym_eigen_sorted(&hr)?;
            let d = vecs.transpose() * gr;
            let dim = lam.len();
            let zero = cfg.rank_tol * qnorm * (p as f64);
            let dtol = 1e-10 * (1.0 + d.norm());

            let lift = |w: &DVector<f64>| &u0 + &null * (&vecs * w);

            // ball inactive: minimum-norm stationary point
            let mut interior = Some(DVector::zeros(dim));
            for i in 0..dim {
                if lam[i] > zero {
                    interior.as_mut().unwrap()[i] = -d[i] / lam[i];
                } else if d[i].abs() > dtol {
                    interior = None;
                    break;
                }
            }
            if let Some(w) = &interior {
                offer(lift(w), 0.0, &subset);
            }

            // ball active with a positive multiplier
            if let Some(rho) = rho {
                let lam_c: Vec<f64> = lam
                    .iter()
                    .map(|&l| if l > zero { l } else { 0.0 })
                    .collect();
                let phi = |mu: f64| {
                    let mut v = -rho;
                    let mut dv = 0.0;
                    for (l, di) in lam_c.iter().zip(d.iter()) {
                        if *di == 0.0 {
                            continue;
                        }
                        let den = l + mu;
                        v += di * di / (den * den);
                        dv -= 2.0 * di * di / (den * den * den);
                    }
                    (v, dv)
                };
                let at_zero = interior
                    .as_ref()
                    .map_or(f64::INFINITY, |w| w.norm_squared() - rho);
                if at_zero > 0.0 {
                    let hi = d.norm() / rho.sqrt();
                    let mu = bracketed_root(phi, 0.0, hi, false, cfg.root_tol * rho);
                    let w = DVector::from_iterator(
                        dim,
                        lam_c.iter().zip(d.iter()).map(|(l, di)| -di / (l + mu)),
                    );
                    offer(lift(&w), mu, &subset);
                }
            }
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Whether `½uᵀPu + qᵀu` decreases without bound along a recession
/// direction of the polytope (`P v = 0`, `H v ≤ 0`, `qᵀv < 0`).
fn has_descent_ray(
    quad: &DMatrix<f64>,
    lin: &DVector<f64>,
    poly: &Polytope,
    cfg: &SolverConfig,
) -> bool {
    let kernel = linalg::null_space(quad, cfg.rank_tol);
    if kernel.ncols() == 0 {
        return false;
    }
    let cost = kernel.transpose() * lin;
    let cone = Polytope::new(&poly.h * &kernel, DVector::zeros(poly.rows()));
    match lp_minimize(&cost, &cone, Some(1.0)) {
        LpOutcome::Optimal { value, .. } => value < -cfg.feas_tol,
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Sphere intersection
// ---------------------------------------------------------------------------

/// Step `β ≥ 0` with `‖start + β dir‖² = r`, for `‖start‖² ≤ r` and
/// `dir ≠ 0`.
pub fn sphere_step(start: &DVector<f64>, dir: &DVector<f64>, r: f64) -> f64 {
    let zz = dir.norm_squared();
    let xz = start.dot(dir);
    let slack = (r - start.norm_squared()).max(0.0);
    (-xz + (xz * xz + zz * slack).sqrt()) / zz
}

/// The point where the segment from `inside` to `outside` meets the sphere
/// `uᵀu = r`.
pub fn segment_sphere_crossing(
    inside: &DVector<f64>,
    outside: &DVector<f64>,
    r: f64,
) -> DVector<f64> {
    let dir = outside - inside;
    if dir.norm_squared() == 0.0 {
        return outside.clone();
    }
    let s = sphere_step(inside, &dir, r).min(1.0);
    inside + dir * s
}

/// Decides whether `{u : H u ≤ g, uᵀu = r}` is empty and returns a witness
/// point when it is not.
pub fn sphere_polytope_intersect(
    poly: &Polytope,
    ball: BallSpec,
    cfg: &SolverConfig,
) -> Result<IntersectionWitness> {
    let p = poly.dim();
    let r = ball.radius_sq;
    if p == 0 {
        return Ok(IntersectionWitness::Empty);
    }

    // closest point of L to the origin
    let proj = match convex_minimize(
        &(DMatrix::identity(p, p) * 2.0),
        &DVector::zeros(p),
        poly,
        None,
        cfg,
    ) {
        Ok(sol) => sol.x,
        Err(Error::Infeasible) => return Ok(IntersectionWitness::Empty),
        Err(e) => return Err(e),
    };
    let norm_sq = proj.norm_squared();
    if norm_sq > r + cfg.feas_tol {
        return Ok(IntersectionWitness::Empty);
    }
    if norm_sq >= r - cfg.feas_tol {
        return Ok(IntersectionWitness::Point(proj));
    }

    if column_dependence_check(&poly.h, cfg.rank_tol) {
        let null = linalg::null_space(&poly.h, cfg.rank_tol);
        let dir: DVector<f64> = if null.ncols() > 0 {
            null.column(0).into_owned()
        } else {
            // rank-deficient by count only; fall back to the weakest direction
            let mut e = DVector::zeros(p);
            e[0] = 1.0;
            e
        };
        let beta = sphere_step(&proj, &dir, r);
        return Ok(IntersectionWitness::Point(&proj + dir * beta));
    }

    if let Boundedness::UnboundedAlong(dir) = boundedness_probe(poly, &proj, cfg) {
        let beta = sphere_step(&proj, &dir, r);
        return Ok(IntersectionWitness::Point(&proj + dir * beta));
    }

    let vertices = enumerate_vertices(poly, cfg)?;
    if let Some(v) = vertices
        .iter()
        .find(|v| (v.norm_squared() - r).abs() <= cfg.feas_tol)
    {
        return Ok(IntersectionWitness::Point(v.clone()));
    }
    match vertices
        .iter()
        .filter(|v| v.norm_squared() > r)
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
    {
        Some(far) => Ok(IntersectionWitness::Point(segment_sphere_crossing(
            &proj, far, r,
        ))),
        None => Ok(IntersectionWitness::Empty),
    }
}

/// Euclidean projection onto `{u : uᵀu ≤ r} ∩ L` by Dykstra's alternating
/// projections.
pub fn project_dykstra(
    point: &DVector<f64>,
    poly: &Polytope,
    ball: BallSpec,
    iterations: usize,
    tol: f64,
) -> DVector<f64> {
    let m = poly.rows();
    let mut x = point.clone();
    let mut incs = vec![DVector::zeros(point.len()); m + 1];
    let norms: Vec<f64> = poly.h.row_iter().map(|r| r.norm_squared()).collect();
    for _ in 0..iterations {
        let prev = x.clone();
        for j in 0..=m {
            let y = &x + &incs[j];
            let projected = if j == m {
                let n2 = y.norm_squared();
                if n2 > ball.radius_sq {
                    &y * (ball.radius_sq / n2).sqrt()
                } else {
                    y.clone()
                }
            } else {
                let row = poly.h.row(j).transpose();
                let excess = row.dot(&y) - poly.g[j];
                if excess > 0.0 && norms[j] > 0.0 {
                    &y - row * (excess / norms[j])
                } else {
                    y.clone()
                }
            };
            incs[j] = &y - &projected;
            x = projected;
        }
        if (&x - prev).norm() <= tol {
            break;
        }
    }
    x
}
