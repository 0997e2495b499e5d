//! The classical trust region subproblem
//!
//! ```text
//!     minimize ½ yᵀ diag(σ) y + dᵀy   subject to  yᵀy ≤ 1
//! ```
//!
//! in eigen-coordinates. Boundary stationary points `y(μ) = −(Σ + μI)⁻¹ d`
//! are parametrised by the roots of the secular function
//! `φ(μ) = Σ dᵢ²/(σᵢ + μ)² − 1`. The global solution set is the root with
//! `μ ≥ −σ₁`, or a sphere in the leading eigenspace in the hard case where
//! `d` has no component there. At most one further boundary local minimizer
//! exists, with `μ` in `(max{−σ₂, 0}, −σ₁)` and `φ′(μ) > 0`.
//!
//! Internally every evaluation works with the shift `t = μ + σ₁` and the gaps
//! `σᵢ − σ₁`, which keeps denominators accurate when a root sits close to the
//! pole at `−σ₁`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{SolverConfig, SpectralData};

/// Relative size below which the leading-eigenspace part of `d` counts as zero.
pub const HARD_CASE_TOL: f64 = 1e-10;

const POLE_GUARD: f64 = 1e-14;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SecularFunction {
    pub sigma: DVector<f64>,
    pub d: DVector<f64>,
    pub k: usize,
}

impl SecularFunction {
    pub fn new(sd: &SpectralData) -> Self {
        Self {
            sigma: sd.sigma.clone(),
            d: sd.d.clone(),
            k: sd.k,
        }
    }
}

/// Evaluates `φ(μ)` and `φ′(μ)`.
pub fn secular_eval(sf: &SecularFunction, mu: f64) -> Result<(f64, f64)> {
    let mut phi = -1.0;
    let mut dphi = 0.0;
    for (s, d) in sf.sigma.iter().zip(sf.d.iter()) {
        if *d == 0.0 {
            continue;
        }
        let den = s + mu;
        let guard = POLE_GUARD * s.abs().max(1.0);
        if den.abs() <= guard {
            return Err(Error::PoleProximity {
                distance: den.abs(),
            });
        }
        let d2 = d * d;
        phi += d2 / (den * den);
        dphi -= 2.0 * d2 / (den * den * den);
    }
    Ok((phi, dphi))
}

/// Global solution set of the trust region subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum GlobalSet {
    Singleton {
        y_star: DVector<f64>,
        mu_star: f64,
    },
    /// Every `(u, tail)` with `‖u‖² = radius_sq`, `u ∈ R^k`.
    Sphere {
        k: usize,
        tail: DVector<f64>,
        radius_sq: f64,
        mu_star: f64,
    },
}

impl GlobalSet {
    pub fn mu_star(&self) -> f64 {
        match self {
            GlobalSet::Singleton { mu_star, .. } | GlobalSet::Sphere { mu_star, .. } => *mu_star,
        }
    }

    /// Point of the sphere with head coordinates `u`.
    pub fn sphere_point(&self, u: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            GlobalSet::Sphere { k, tail, .. } => {
                assert_eq!(u.len(), *k, "head must have the sphere dimension");
                let mut y = DVector::zeros(k + tail.len());
                y.rows_mut(0, *k).copy_from(u);
                y.rows_mut(*k, tail.len()).copy_from(tail);
                Some(y)
            }
            GlobalSet::Singleton { .. } => None,
        }
    }

    /// A member of the set: the singleton itself or the sphere point along
    /// the first leading axis.
    pub fn representative(&self) -> DVector<f64> {
        match self {
            GlobalSet::Singleton { y_star, .. } => y_star.clone(),
            GlobalSet::Sphere { k, radius_sq, .. } => {
                let mut u = DVector::zeros(*k);
                u[0] = radius_sq.sqrt();
                self.sphere_point(&u).expect("sphere")
            }
        }
    }

    pub fn value(&self, sd: &SpectralData) -> f64 {
        sd.objective(&self.representative())
    }
}

/// The candidate local non-global minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCandidate {
    pub y_bar: DVector<f64>,
    pub mu_bar: f64,
    pub phi_prime: f64,
}

/// `φ` and `φ′` in the shifted variable `t = μ + σ₁`.
struct Shifted<'a> {
    gaps: Vec<f64>,
    d: &'a DVector<f64>,
}

impl<'a> Shifted<'a> {
    fn new(sd: &'a SpectralData) -> Self {
        let s1 = sd.sigma[0];
        Self {
            gaps: sd.sigma.iter().map(|s| s - s1).collect(),
            d: &sd.d,
        }
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let mut phi = -1.0;
        let mut dphi = 0.0;
        for (g, d) in self.gaps.iter().zip(self.d.iter()) {
            if *d == 0.0 {
                continue;
            }
            let den = g + t;
            let d2 = d * d;
            phi += d2 / (den * den);
            dphi -= 2.0 * d2 / (den * den * den);
        }
        (phi, dphi)
    }

    fn point(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.gaps.len(),
            self.gaps.iter().zip(self.d.iter()).map(
                |(g, d)| {
                    if *d == 0.0 {
                        0.0
                    } else {
                        -d / (g + t)
                    }
                },
            ),
        )
    }
}

/// Safeguarded Newton iteration for a monotone function on a bracket.
///
/// `f(lo)` and `f(hi)` must have opposite signs (either may be infinite);
/// `increasing` gives the direction. Returns the iterate with the smallest
/// `|f|` once `|f| ≤ tol` or the bracket collapses.
pub(crate) fn bracketed_root(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    increasing: bool,
    tol: f64,
) -> f64 {
    let mut t = if lo.is_finite() && hi.is_finite() {
        hi
    } else {
        0.5 * (lo + hi)
    };
    let mut best = (f64::INFINITY, t);
    for _ in 0..MAX_ITER {
        let (v, dv) = f(t);
        if v.abs() < best.0 {
            best = (v.abs(), t);
        }
        if v.abs() <= tol {
            return t;
        }
        if (v < 0.0) == increasing {
            lo = t;
        } else {
            hi = t;
        }
        let width = hi - lo;
        if !(width > f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)) {
            break;
        }
        let newton = t - v / dv;
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    best.1
}

fn head_is_zero(sd: &SpectralData) -> bool {
    let head = sd.d.rows(0, sd.k).norm();
    head <= HARD_CASE_TOL * (1.0 + sd.d.norm())
}

/// Global solution set of the trust region subproblem in eigen-coordinates.
pub fn global_solve(sd: &SpectralData, cfg: &SolverConfig) -> Result<GlobalSet> {
    let n = sd.n();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty spectral data".into()));
    }
    let s1 = sd.sigma[0];
    let dnorm = sd.d.norm();
    let shifted = Shifted::new(sd);

    if s1 >= 0.0 {
        // convex: interior stationary point when it exists and fits
        let zero = cfg.cluster_tol * sd.sigma[n - 1].abs().max(1.0);
        let dtol = HARD_CASE_TOL * (1.0 + dnorm);
        let mut interior = Some(DVector::zeros(n));
        for i in 0..n {
            if sd.sigma[i] > zero {
                interior.as_mut().unwrap()[i] = -sd.d[i] / sd.sigma[i];
            } else if sd.d[i].abs() > dtol {
                interior = None;
                break;
            }
        }
        if let Some(y) = interior {
            if y.norm_squared() <= 1.0 {
                return Ok(GlobalSet::Singleton {
                    y_star: y,
                    mu_star: 0.0,
                });
            }
        }
        // boundary root with μ > 0, i.e. t > σ₁
        let t = bracketed_root(|t| shifted.eval(t), s1, s1 + dnorm, false, cfg.root_tol);
        return Ok(GlobalSet::Singleton {
            y_star: shifted.point(t),
            mu_star: t - s1,
        });
    }

    if !head_is_zero(sd) {
        let t = bracketed_root(|t| shifted.eval(t), 0.0, dnorm, false, cfg.root_tol);
        return Ok(GlobalSet::Singleton {
            y_star: shifted.point(t),
            mu_star: t - s1,
        });
    }

    let k = sd.k;
    let tail_sum: f64 = (k..n).map(|i| (sd.d[i] / shifted.gaps[i]).powi(2)).sum();
    if tail_sum > 1.0 + cfg.root_tol {
        // φ(−σ₁⁺) > 0: the root lies strictly right of the pole
        let t = bracketed_root(|t| shifted.eval(t), 0.0, dnorm, false, cfg.root_tol);
        return Ok(GlobalSet::Singleton {
            y_star: shifted.point(t),
            mu_star: t - s1,
        });
    }
    let mut radius_sq = 1.0 - tail_sum;
    if radius_sq <= cfg.root_tol {
        radius_sq = 0.0;
    }
    let tail = DVector::from_iterator(n - k, (k..n).map(|i| -sd.d[i] / shifted.gaps[i]));
    Ok(GlobalSet::Sphere {
        k,
        tail,
        radius_sq,
        mu_star: -s1,
    })
}

/// The unique candidate for a local non-global minimizer, if any.
pub fn local_nonglobal(sd: &SpectralData, cfg: &SolverConfig) -> Option<LocalCandidate> {
    let n = sd.n();
    if n == 0 || sd.k >= 2 {
        return None;
    }
    let s1 = sd.sigma[0];
    if s1 >= 0.0 || head_is_zero(sd) {
        return None;
    }
    let lower_mu = if n >= 2 { (-sd.sigma[1]).max(0.0) } else { 0.0 };
    if lower_mu >= -s1 {
        return None;
    }
    let shifted = Shifted::new(sd);
    let t_left = lower_mu + s1;

    // φ′ is increasing on the interval; bisect for its sign change
    let (mut a, mut b) = (t_left, 0.0);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if shifted.eval(mid).1 < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let t_min = 0.5 * (a + b);
    let (phi_min, _) = shifted.eval(t_min);
    if !(phi_min < -cfg.root_tol) {
        return None;
    }
    let t_bar = bracketed_root(|t| shifted.eval(t), t_min, 0.0, true, cfg.root_tol);
    let (phi, phi_prime) = shifted.eval(t_bar);
    if !(phi_prime > 0.0) || phi.abs() > cfg.root_tol.max(1e3 * f64::EPSILON) || t_bar >= 0.0 {
        return None;
    }
    let mu_bar = t_bar - s1;
    if !(mu_bar > lower_mu && mu_bar < -s1) {
        return None;
    }
    Some(LocalCandidate {
        y_bar: shifted.point(t_bar),
        mu_bar,
        phi_prime,
    })
}
