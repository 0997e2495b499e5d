//! Problem data, solver configuration, spectral preprocessing and objective
//! evaluation.
//!
//! A [`ProblemInstance`] describes
//!
//! ```text
//!     minimize    ½ xᵀQx + cᵀx + constant
//!     subject to  xᵀx ≤ radius_sq
//!                 A x ≤ b
//! ```
//!
//! The top-level problem has `radius_sq = 1`; the field exists so that the
//! recursive reductions can share this type.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reduction::ReductionStats;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Constraint normals as rows, `m × n`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub radius_sq: f64,
    /// Constant added to the objective. Zero unless the instance came from a
    /// reformulation that produces one.
    pub constant: f64,
}

impl ProblemInstance {
    /// Unit-ball instance from its data. Dimensions are checked by
    /// [`validate_instance`], not here.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        Self {
            q,
            c,
            a,
            b,
            radius_sq: 1.0,
            constant: 0.0,
        }
    }

    /// Instance without linear constraints.
    pub fn unconstrained(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self::new(q, c, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// Builds an instance from row-major nested slices.
    pub fn from_rows(q: &[Vec<f64>], c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let n = c.len();
        if q.len() != n || q.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!("Q must be {n}×{n}")));
        }
        if a.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "rows of A must have length {n}"
            )));
        }
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "A has {} rows but b has {} entries",
                a.len(),
                b.len()
            )));
        }
        let q = DMatrix::from_fn(n, n, |i, j| q[i][j]);
        let a = DMatrix::from_fn(a.len(), n, |i, j| a[i][j]);
        Ok(Self::new(
            q,
            DVector::from_column_slice(c),
            a,
            DVector::from_column_slice(b),
        ))
    }

    pub fn with_constant(mut self, constant: f64) -> Self {
        self.constant = constant;
        self
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    /// Whether `x` lies in the ball and satisfies every linear constraint,
    /// both within `tol`.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        x.norm_squared() <= self.radius_sq + tol && self.max_violation(x) <= tol
    }

    /// Largest violation `max(aᵢᵀx − bᵢ)` over the linear constraints, or
    /// `-∞` when there are none.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.a * x - &self.b)
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Indices of the linear constraints active at `x` within `tol`.
    pub fn active_set(&self, x: &DVector<f64>, tol: f64) -> Vec<usize> {
        let ax = &self.a * x;
        (0..self.m())
            .filter(|&i| (ax[i] - self.b[i]).abs() <= tol * (1.0 + self.b[i].abs()))
            .collect()
    }
}

/// Eigen-structure of `Q` in the coordinates `y = basis · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    /// Eigenvalues in nondecreasing order.
    pub sigma: DVector<f64>,
    /// Orthogonal matrix whose rows are the eigenvectors of `Q`, so that
    /// `basis · Q · basisᵀ = diag(sigma)`.
    pub basis: DMatrix<f64>,
    /// Rotated linear term `basis · c`.
    pub d: DVector<f64>,
    /// Multiplicity of the smallest eigenvalue under the clustering rule.
    pub k: usize,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// Maps eigen-coordinates back to the original ones.
    pub fn to_original(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * y
    }

    /// `½ yᵀ diag(sigma) y + dᵀy`.
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        let quad: f64 = self
            .sigma
            .iter()
            .zip(y.iter())
            .map(|(s, v)| s * v * v)
            .sum();
        0.5 * quad + self.d.dot(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Relative symmetry tolerance on `Q`.
    pub sym_tol: f64,
    /// Feasibility tolerance for constraints and the ball.
    pub feas_tol: f64,
    /// Tolerance on `|φ(μ)|` for secular roots.
    pub root_tol: f64,
    /// Relative tolerance for clustering the smallest eigenvalue.
    pub cluster_tol: f64,
    /// Relative singular-value threshold for numerical rank.
    pub rank_tol: f64,
    /// Limit on combinatorial enumerations (vertices, active sets).
    pub max_vertex_enum: usize,
    /// Evaluate sibling facet subproblems concurrently.
    pub parallel_facets: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sym_tol: 1e-10,
            feas_tol: 1e-9,
            root_tol: 1e-12,
            cluster_tol: 1e-8,
            rank_tol: 1e-9,
            max_vertex_enum: 100_000,
            parallel_facets: false,
        }
    }
}

impl SolverConfig {
    /// Sets the feasibility tolerance to `tol` and the secular root tolerance
    /// to `tol / 1000`, keeping the default ratio between the two.
    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.feas_tol = tol;
        self.root_tol = tol * 1e-3;
        self
    }

    pub fn check(&self) -> Result<()> {
        let tols = [
            self.sym_tol,
            self.feas_tol,
            self.root_tol,
            self.cluster_tol,
            self.rank_tol,
        ];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) || self.max_vertex_enum == 0 {
            return Err(Error::BadOption(
                "tolerances and budgets must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionReport {
    pub status: Status,
    pub value: f64,
    pub x: Option<DVector<f64>>,
    /// Ball multiplier at `x`, in the scaling of the original ball.
    pub multiplier: Option<f64>,
    pub active_set: Vec<usize>,
    pub trs0_solves: usize,
    pub newdc_holds: Option<bool>,
    /// Whether the answer came from the interior local non-global candidate.
    pub local_candidate_used: bool,
    pub stats: ReductionStats,
}

impl SolutionReport {
    pub fn infeasible(stats: ReductionStats) -> Self {
        Self {
            status: Status::Infeasible,
            value: f64::INFINITY,
            x: None,
            multiplier: None,
            active_set: Vec::new(),
            trs0_solves: stats.trs0_solves,
            newdc_holds: None,
            local_candidate_used: false,
            stats,
        }
    }
}

/// Checks dimensions and finiteness, repairs tiny asymmetry in `Q`, and drops
/// vacuous zero rows of `A`.
pub fn validate_instance(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<ProblemInstance> {
    cfg.check()?;
    let n = inst.n();
    if n == 0 {
        return Err(Error::DimensionMismatch(
            "dimension must be positive".into(),
        ));
    }
    if inst.q.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}×{}, expected {n}×{n}",
            inst.q.nrows(),
            inst.q.ncols()
        )));
    }
    if inst.a.ncols() != n || inst.a.nrows() != inst.b.len() {
        return Err(Error::DimensionMismatch(format!(
            "A is {}×{} with {} right-hand sides, expected m×{n}",
            inst.a.nrows(),
            inst.a.ncols(),
            inst.b.len()
        )));
    }
    if !(inst.radius_sq.is_finite() && inst.radius_sq > 0.0) {
        return Err(Error::DimensionMismatch(
            "radius_sq must be positive".into(),
        ));
    }
    let finite = inst.q.iter().all(|v| v.is_finite())
        && inst.c.iter().all(|v| v.is_finite())
        && inst.a.iter().all(|v| v.is_finite())
        && inst.b.iter().all(|v| v.is_finite())
        && inst.constant.is_finite();
    if !finite {
        return Err(Error::NonFinite);
    }

    let asym = (&inst.q - inst.q.transpose()).amax();
    let allowed = cfg.sym_tol * inst.q.norm();
    if asym > allowed {
        return Err(Error::NonSymmetric {
            asymmetry: asym,
            tolerance: allowed,
        });
    }
    let q = (&inst.q + inst.q.transpose()) * 0.5;

    let scale = inst.a.row_iter().map(|r| r.norm()).fold(1.0, f64::max);
    let mut keep = Vec::with_capacity(inst.m());
    for i in 0..inst.m() {
        if inst.a.row(i).norm() <= cfg.rank_tol * scale {
            if inst.b[i] < -cfg.feas_tol {
                return Err(Error::ZeroRowInfeasible {
                    row: i,
                    rhs: inst.b[i],
                });
            }
        } else {
            keep.push(i);
        }
    }
    Ok(ProblemInstance {
        q,
        c: inst.c.clone(),
        a: linalg::select_rows(&inst.a, &keep),
        b: linalg::select_entries(&inst.b, &keep),
        radius_sq: inst.radius_sq,
        constant: inst.constant,
    })
}

/// Eigen-decomposition of `Q` with the smallest eigenvalue's cluster size.
pub fn spectral_decompose(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SpectralData> {
    spectral_of(&inst.q, &inst.c, cfg)
}

pub(crate) fn spectral_of(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SpectralData> {
    let (sigma, vectors) = linalg::sym_eigen_sorted(q)?;
    let basis = vectors.transpose();
    let d = &basis * c;
    let k = cluster_size(&sigma, cfg.cluster_tol);
    Ok(SpectralData { sigma, basis, d, k })
}

pub(crate) fn cluster_size(sigma: &DVector<f64>, cluster_tol: f64) -> usize {
    if sigma.is_empty() {
        return 0;
    }
    let s1 = sigma[0];
    let width = cluster_tol * s1.abs().max(1.0);
    sigma.iter().take_while(|&&s| s - s1 <= width).count()
}

/// `½ xᵀQx + cᵀx` plus the instance constant.
pub fn objective_value(inst: &ProblemInstance, x: &DVector<f64>) -> Result<f64> {
    if x.len() != inst.n() {
        return Err(Error::DimensionMismatch(format!(
            "point has length {}, expected {}",
            x.len(),
            inst.n()
        )));
    }
    Ok(0.5 * x.dot(&(&inst.q * x)) + inst.c.dot(x) + inst.constant)
}
