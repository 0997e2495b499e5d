//! Recursive facet reduction for the extended trust region subproblem.
//!
//! Each recursion node is an instance over the unit ball. Its value is
//!
//! * the trust region optimum when the global solution set of the problem
//!   without linear constraints meets the polytope;
//! * otherwise the best of the facet subproblems, where facet `j` fixes
//!   `aⱼᵀx = bⱼ` and is rewritten as a smaller instance of the same form
//!   through a null-space basis of `aⱼ`;
//! * unless the unique local non-global trust region candidate lies strictly
//!   inside the polytope and beats every facet.
//!
//! Recursion stops at infeasible facets, convex nodes (solved directly) and
//! nodes without linear constraints (a plain trust region subproblem).
//! Facet sets are memoised as unordered index sets since fixing `i` then `j`
//! lands on the same affine subspace as `j` then `i`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, BallSpec, IntersectionWitness, LpOutcome, Polytope};
use crate::linalg;
use crate::model::{
    objective_value, spectral_of, validate_instance, ProblemInstance, SolutionReport, SolverConfig,
    SpectralData, Status,
};
use crate::trs0::{self, GlobalSet};

/// Null-space parametrisation `x = z0 + P z` of the hyperplane `aᵀx = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetBasis {
    /// `n × (n−1)` with orthonormal columns orthogonal to `a`.
    pub p: DMatrix<f64>,
    /// Minimum-norm point of the hyperplane.
    pub z0: DVector<f64>,
    /// `z0ᵀ(I − PPᵀ)z0`, which equals `‖z0‖²`.
    pub offset_sq: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReductionStats {
    pub trs0_solves: usize,
    pub nodes_visited: usize,
    pub memo_hits: usize,
    pub max_depth: usize,
}

#[derive(Default)]
struct StatsCounter {
    trs0_solves: AtomicUsize,
    nodes_visited: AtomicUsize,
    memo_hits: AtomicUsize,
    max_depth: AtomicUsize,
}

impl StatsCounter {
    fn snapshot(&self) -> ReductionStats {
        ReductionStats {
            trs0_solves: self.trs0_solves.load(Ordering::Relaxed),
            nodes_visited: self.nodes_visited.load(Ordering::Relaxed),
            memo_hits: self.memo_hits.load(Ordering::Relaxed),
            max_depth: self.max_depth.load(Ordering::Relaxed),
        }
    }
}

/// Householder-based facet basis for `aᵀx = b`.
pub fn facet_basis(a: &DVector<f64>, b: f64) -> Result<FacetBasis> {
    let n = a.len();
    let norm = a.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNormal);
    }
    let unit = a / norm;
    // reflector H = I − 2wwᵀ/wᵀw mapping `unit` onto ∓e₁
    let mut w = unit.clone();
    let sign = if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += sign;
    let ww = w.norm_squared();
    let reflector = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / ww);
    let p = reflector.columns(1, n - 1).into_owned();
    let z0 = a * (b / (norm * norm));
    let offset_sq = b * b / (norm * norm);
    Ok(FacetBasis { p, z0, offset_sq })
}

/// An instance restricted to a facet, rescaled back to the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedInstance {
    /// Data in the coordinates `w`, with `x = z0 + scale · P w`.
    pub instance: ProblemInstance,
    pub basis: FacetBasis,
    /// Radius `r′` of the facet's slice of the ball.
    pub scale: f64,
    /// Parent row index of each row of `instance`.
    pub rows: Vec<usize>,
    /// `r′ · ‖aᵢ‖` for each row, the reference size for pruning.
    row_scale: Vec<f64>,
}

impl ReducedInstance {
    /// Maps reduced coordinates back to the parent's.
    pub fn lift(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.basis.z0 + &self.basis.p * w * self.scale
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum FacetRestriction {
    Infeasible,
    /// The facet meets the ball in a single point (or the instance is
    /// one-dimensional), given in parent coordinates.
    PointOnly(DVector<f64>),
    Reduced(ReducedInstance),
}

/// Restricts `inst` to the hyperplane of constraint `j`.
pub fn restrict_to_facet(
    inst: &ProblemInstance,
    j: usize,
    cfg: &SolverConfig,
) -> Result<FacetRestriction> {
    let n = inst.n();
    let a = inst.a.row(j).transpose();
    let fb = facet_basis(&a, inst.b[j])?;
    let r2 = inst.radius_sq - fb.offset_sq;
    if r2 < -cfg.feas_tol {
        return Ok(FacetRestriction::Infeasible);
    }
    if r2 <= cfg.feas_tol || n == 1 {
        return Ok(FacetRestriction::PointOnly(fb.z0));
    }
    let r = r2.sqrt();
    let pt = fb.p.transpose();
    let qp = &pt * &inst.q * &fb.p * r2;
    let q = (&qp + qp.transpose()) * 0.5;
    let qz0 = &inst.q * &fb.z0;
    let c = &pt * (&qz0 + &inst.c) * r;
    let constant = inst.constant + 0.5 * fb.z0.dot(&qz0) + inst.c.dot(&fb.z0);

    let rows: Vec<usize> = (0..inst.m()).filter(|&i| i != j).collect();
    let mut a_red = DMatrix::zeros(rows.len(), n - 1);
    let mut b_red = DVector::zeros(rows.len());
    let mut row_scale = Vec::with_capacity(rows.len());
    for (dst, &i) in rows.iter().enumerate() {
        let ai = inst.a.row(i).transpose();
        a_red.set_row(dst, &(&pt * &ai * r).transpose());
        b_red[dst] = inst.b[i] - ai.dot(&fb.z0);
        row_scale.push(r * ai.norm());
    }
    Ok(FacetRestriction::Reduced(ReducedInstance {
        instance: ProblemInstance {
            q,
            c,
            a: a_red,
            b: b_red,
            radius_sq: 1.0,
            constant,
        },
        basis: fb,
        scale: r,
        rows,
        row_scale,
    }))
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum Pruned {
    Infeasible,
    Kept(ReducedInstance),
}

/// Drops constraints whose normal vanished in the reduction (parallel to the
/// fixed facet) and are satisfied; signals infeasibility if such a
/// constraint is violated.
pub fn prune_redundant(red: ReducedInstance, cfg: &SolverConfig) -> Pruned {
    let mut keep = Vec::with_capacity(red.rows.len());
    for i in 0..red.rows.len() {
        let norm = red.instance.a.row(i).norm();
        if norm <= cfg.rank_tol * red.row_scale[i] {
            if red.instance.b[i] < -cfg.feas_tol {
                return Pruned::Infeasible;
            }
        } else {
            keep.push(i);
        }
    }
    if keep.len() == red.rows.len() {
        return Pruned::Kept(red);
    }
    let ReducedInstance {
        instance,
        basis,
        scale,
        rows,
        row_scale,
    } = red;
    Pruned::Kept(ReducedInstance {
        instance: ProblemInstance {
            a: linalg::select_rows(&instance.a, &keep),
            b: linalg::select_entries(&instance.b, &keep),
            ..instance
        },
        basis,
        scale,
        rows: keep.iter().map(|&i| rows[i]).collect(),
        row_scale: keep.iter().map(|&i| row_scale[i]).collect(),
    })
}

/// A recursion node together with the affine map back to the original
/// coordinates.
#[derive(Debug, Clone)]
struct Node {
    inst: ProblemInstance,
    /// Original index of each row of `inst`.
    rows: Vec<usize>,
    /// Original indices of the facets fixed so far, sorted.
    fixed: Vec<usize>,
    offset: DVector<f64>,
    map: DMatrix<f64>,
    /// Factor converting this node's ball multiplier to the original ball.
    ball_scale: f64,
    depth: usize,
}

impl Node {
    fn to_original(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.map * x
    }

    fn child(&self, red: &ReducedInstance, fixed_row: usize) -> Node {
        let mut fixed = self.fixed.clone();
        fixed.push(fixed_row);
        fixed.sort_unstable();
        Node {
            inst: red.instance.clone(),
            rows: red.rows.iter().map(|&i| self.rows[i]).collect(),
            fixed,
            offset: &self.offset + &self.map * &red.basis.z0,
            map: &self.map * &red.basis.p * red.scale,
            ball_scale: self.ball_scale * red.scale * red.scale,
            depth: self.depth + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    /// Objective value including the node constant.
    value: f64,
    /// Point in original coordinates.
    x: DVector<f64>,
    multiplier: Option<f64>,
    local_used: bool,
}

type Outcome = Option<Candidate>;

/// The facet-reduction solver. [`solve_extended`] runs it with the default
/// options.
pub struct Solver {
    cfg: SolverConfig,
    memoize: bool,
}

struct Run<'a> {
    cfg: &'a SolverConfig,
    memo: Option<Mutex<HashMap<Vec<usize>, Outcome>>>,
    stats: StatsCounter,
}

impl Solver {
    pub fn new(cfg: SolverConfig) -> Self {
        Self { cfg, memoize: true }
    }

    /// Toggle memoisation of facet subproblems on unordered index sets.
    pub fn memoize(mut self, on: bool) -> Self {
        self.memoize = on;
        self
    }

    pub fn solve(&self, inst: &ProblemInstance) -> Result<SolutionReport> {
        let cfg = &self.cfg;
        let original = validate_instance(inst, cfg)?;
        let n = original.n();
        let scale = original.radius_sq.sqrt();

        let run = Run {
            cfg,
            memo: self.memoize.then(|| Mutex::new(HashMap::new())),
            stats: StatsCounter::default(),
        };

        let mut root = Node {
            inst: ProblemInstance {
                q: &original.q * original.radius_sq,
                c: &original.c * scale,
                a: &original.a * scale,
                b: original.b.clone(),
                radius_sq: 1.0,
                constant: original.constant,
            },
            rows: (0..original.m()).collect(),
            fixed: Vec::new(),
            offset: DVector::zeros(n),
            map: DMatrix::identity(n, n) * scale,
            ball_scale: original.radius_sq,
            depth: 0,
        };

        // phase 1: the polytope must reach into the ball
        let poly = Polytope::new(root.inst.a.clone(), root.inst.b.clone());
        match geometry::convex_minimize(
            &(DMatrix::identity(n, n) * 2.0),
            &DVector::zeros(n),
            &poly,
            None,
            cfg,
        ) {
            Ok(sol) if sol.x.norm_squared() <= 1.0 + cfg.feas_tol => {}
            Ok(_) | Err(Error::Infeasible) => return Err(Error::Infeasible),
            Err(e) => return Err(e),
        }

        let outcome = loop {
            match forced_equality(&root.inst, cfg) {
                None => break run.solve_node(&root)?,
                Some(j) => match restrict_to_facet(&root.inst, j, cfg)? {
                    FacetRestriction::Infeasible => return Err(Error::Infeasible),
                    FacetRestriction::PointOnly(z) => break run.point_candidate(&root, j, &z)?,
                    FacetRestriction::Reduced(red) => match prune_redundant(red, cfg) {
                        Pruned::Infeasible => return Err(Error::Infeasible),
                        Pruned::Kept(red) => root = root.child(&red, root.rows[j]),
                    },
                },
            }
        };

        let stats = run.stats.snapshot();
        let Some(best) = outcome else {
            return Err(Error::Infeasible);
        };
        let value = objective_value(&original, &best.x)?;
        Ok(SolutionReport {
            status: Status::Optimal,
            value,
            active_set: inst.active_set(&best.x, 10.0 * cfg.feas_tol),
            x: Some(best.x),
            multiplier: best.multiplier,
            trs0_solves: stats.trs0_solves,
            newdc_holds: None,
            local_candidate_used: best.local_used,
            stats,
        })
    }
}

/// Solves the extended trust region subproblem exactly.
pub fn solve_extended(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolutionReport> {
    Solver::new(*cfg).solve(inst)
}

/// First constraint that holds with equality on all of `polytope ∩ box`, if
/// any. The box `‖x‖∞ ≤ √radius_sq` contains the ball.
fn forced_equality(inst: &ProblemInstance, cfg: &SolverConfig) -> Option<usize> {
    if inst.m() == 0 {
        return None;
    }
    let poly = Polytope::new(inst.a.clone(), inst.b.clone());
    let bound = inst.radius_sq.sqrt();
    (0..inst.m()).find(|&i| {
        let cost = inst.a.row(i).transpose();
        match geometry::lp_minimize(&cost, &poly, Some(bound)) {
            LpOutcome::Optimal { value, .. } => {
                value >= inst.b[i] - cfg.feas_tol * (1.0 + inst.b[i].abs())
            }
            _ => false,
        }
    })
}

impl Run<'_> {
    fn count_node(&self, node: &Node) {
        self.stats.nodes_visited.fetch_add(1, Ordering::Relaxed);
        self.stats
            .max_depth
            .fetch_max(node.depth, Ordering::Relaxed);
    }

    fn solve_node(&self, node: &Node) -> Result<Outcome> {
        self.count_node(node);
        let cfg = self.cfg;
        let inst = &node.inst;
        let n = inst.n();
        let sd = spectral_of(&inst.q, &inst.c, cfg)?;
        let convex_floor = -cfg.rank_tol * inst.q.norm().max(1.0) * n as f64;

        if sd.sigma[0] >= convex_floor {
            let poly = Polytope::new(inst.a.clone(), inst.b.clone());
            return match geometry::convex_minimize(
                &inst.q,
                &inst.c,
                &poly,
                Some(BallSpec::new(1.0)),
                cfg,
            ) {
                Ok(sol) => Ok(Some(Candidate {
                    value: sol.value + inst.constant,
                    x: node.to_original(&sol.x),
                    multiplier: Some(sol.ball_multiplier / node.ball_scale),
                    local_used: false,
                })),
                Err(Error::Infeasible) => Ok(None),
                Err(e) => Err(e),
            };
        }

        let global = trs0::global_solve(&sd, cfg)?;
        self.stats.trs0_solves.fetch_add(1, Ordering::Relaxed);
        let global_candidate = |y: &DVector<f64>| Candidate {
            value: sd.objective(y) + inst.constant,
            x: node.to_original(&sd.to_original(y)),
            multiplier: Some(global.mu_star() / node.ball_scale),
            local_used: false,
        };

        if inst.m() == 0 {
            return Ok(Some(global_candidate(&global.representative())));
        }
        if let Some(y) = self.global_meets_polytope(inst, &sd, &global)? {
            return Ok(Some(global_candidate(&y)));
        }

        let facets: Vec<Outcome> = if cfg.parallel_facets {
            (0..inst.m())
                .into_par_iter()
                .map(|j| self.solve_facet(node, j))
                .collect::<Result<_>>()?
        } else {
            (0..inst.m())
                .map(|j| self.solve_facet(node, j))
                .collect::<Result<_>>()?
        };
        let best_facet = pick_best(facets, 10.0 * cfg.feas_tol);

        if let Some(local) = trs0::local_nonglobal(&sd, cfg) {
            let x = sd.to_original(&local.y_bar);
            let strictly_inside = (&inst.a * &x - &inst.b).iter().all(|&v| v < -cfg.feas_tol);
            let value = sd.objective(&local.y_bar) + inst.constant;
            if strictly_inside && best_facet.as_ref().is_none_or(|b| value < b.value) {
                return Ok(Some(Candidate {
                    value,
                    x: node.to_original(&x),
                    multiplier: Some(local.mu_bar / node.ball_scale),
                    local_used: true,
                }));
            }
        }
        Ok(best_facet)
    }

    /// A point of the trust region solution set inside the polytope of
    /// `inst`, in eigen-coordinates.
    fn global_meets_polytope(
        &self,
        inst: &ProblemInstance,
        sd: &SpectralData,
        global: &GlobalSet,
    ) -> Result<Option<DVector<f64>>> {
        let tol = self.cfg.feas_tol;
        match global {
            GlobalSet::Singleton { y_star, .. } => {
                let x = sd.to_original(y_star);
                Ok(inst.is_feasible(&x, tol).then(|| y_star.clone()))
            }
            GlobalSet::Sphere {
                k, tail, radius_sq, ..
            } => {
                // rows of A in eigen-coordinates, split into head and tail
                let a_eig = &inst.a * sd.basis.transpose();
                let n = sd.n();
                let h = a_eig.columns(0, *k).into_owned();
                let g = &inst.b - a_eig.columns(*k, n - k) * tail;
                let poly = Polytope::new(h, g);
                if *radius_sq <= tol {
                    let u = DVector::zeros(*k);
                    return Ok(poly
                        .contains(&u, tol)
                        .then(|| global.sphere_point(&u))
                        .flatten());
                }
                match geometry::sphere_polytope_intersect(
                    &poly,
                    BallSpec::new(*radius_sq),
                    self.cfg,
                )? {
                    IntersectionWitness::Empty => Ok(None),
                    IntersectionWitness::Point(u) => Ok(global.sphere_point(&u)),
                }
            }
        }
    }

    fn solve_facet(&self, node: &Node, j: usize) -> Result<Outcome> {
        match restrict_to_facet(&node.inst, j, self.cfg)? {
            FacetRestriction::Infeasible => Ok(None),
            FacetRestriction::PointOnly(z) => self.point_candidate(node, j, &z),
            FacetRestriction::Reduced(red) => match prune_redundant(red, self.cfg) {
                Pruned::Infeasible => Ok(None),
                Pruned::Kept(red) => {
                    let child = node.child(&red, node.rows[j]);
                    self.solve_memoized(&child)
                }
            },
        }
    }

    fn solve_memoized(&self, node: &Node) -> Result<Outcome> {
        if let Some(memo) = &self.memo {
            if let Some(hit) = memo.lock().expect("memo lock").get(&node.fixed) {
                self.stats.memo_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit.clone());
            }
        }
        let outcome = self.solve_node(node)?;
        if let Some(memo) = &self.memo {
            memo.lock()
                .expect("memo lock")
                .insert(node.fixed.clone(), outcome.clone());
        }
        Ok(outcome)
    }

    /// Candidate for a facet that meets the ball in the single point `z`.
    fn point_candidate(&self, node: &Node, j: usize, z: &DVector<f64>) -> Result<Outcome> {
        let inst = &node.inst;
        let ok_rows = (0..inst.m())
            .filter(|&i| i != j)
            .all(|i| inst.a.row(i).transpose().dot(z) <= inst.b[i] + self.cfg.feas_tol);
        if !ok_rows || z.norm_squared() > inst.radius_sq + self.cfg.feas_tol {
            return Ok(None);
        }
        Ok(Some(Candidate {
            value: objective_value(inst, z)?,
            x: node.to_original(z),
            multiplier: None,
            local_used: false,
        }))
    }
}

/// Lowest value, ties within `tie` going to the earliest facet.
fn pick_best(outcomes: Vec<Outcome>, tie: f64) -> Outcome {
    let min = outcomes
        .iter()
        .flatten()
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    outcomes
        .into_iter()
        .flatten()
        .find(|c| c.value <= min + tie)
}
