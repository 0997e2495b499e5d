//! Seeded instance generators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::ProblemInstance;

/// Spectral shape of the generated Hessian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Symmetrised Gaussian matrix.
    Gaussian,
    /// Smallest eigenvalue repeated `k` times.
    RepeatedMin(usize),
    /// Simple smallest eigenvalue whose eigenvector is orthogonal to every
    /// constraint normal.
    NormalsOrthogonalToMin,
    /// Rank at most `r`, with a negative eigenvalue when `r ≥ 1`.
    LowRank(usize),
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| gaussian(rng))
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gaussian(rng))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

/// Uniform point in the ball of radius `scale`.
fn point_in_ball(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    let dir = gaussian_vector(rng, n);
    let norm = dir.norm().max(f64::MIN_POSITIVE);
    let radius = scale * rng.random::<f64>().powf(1.0 / n as f64);
    dir * (radius / norm)
}

/// Gaussian instance with a strictly feasible point: `b = A x₀ + |noise|`
/// for a random `x₀` inside the ball.
pub fn random_instance(n: usize, m: usize, seed: u64) -> ProblemInstance {
    structured_instance(n, m, seed, Structure::Gaussian)
}

pub fn structured_instance(n: usize, m: usize, seed: u64, shape: Structure) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (q, min_vec) = match shape {
        Structure::Gaussian => {
            let g = gaussian_matrix(&mut rng, n, n);
            ((&g + g.transpose()) * 0.5, None)
        }
        Structure::RepeatedMin(k) => {
            let v = orthogonal(&mut rng, n);
            let k = k.clamp(1, n);
            let low = -1.0 - rng.random::<f64>();
            let spectrum = DVector::from_fn(n, |i, _| {
                if i < k {
                    low
                } else {
                    low + 0.5 + 2.0 * rng.random::<f64>()
                }
            });
            (&v * DMatrix::from_diagonal(&spectrum) * v.transpose(), None)
        }
        Structure::NormalsOrthogonalToMin => {
            let v = orthogonal(&mut rng, n);
            let spectrum = DVector::from_fn(n, |i, _| {
                if i == 0 {
                    -2.0
                } else {
                    -1.5 + 3.0 * rng.random::<f64>()
                }
            });
            let q = &v * DMatrix::from_diagonal(&spectrum) * v.transpose();
            (q, Some(v.column(0).into_owned()))
        }
        Structure::LowRank(r) => {
            let r = r.min(n);
            let g = gaussian_matrix(&mut rng, n, r);
            let signs = DVector::from_fn(r, |i, _| if i == 0 { -1.0 } else { 1.0 });
            (&g * DMatrix::from_diagonal(&signs) * g.transpose(), None)
        }
    };
    let q = (&q + q.transpose()) * 0.5;
    let c = gaussian_vector(&mut rng, n);
    let mut a = gaussian_matrix(&mut rng, m, n);
    if let Some(z) = min_vec {
        for mut row in a.row_iter_mut() {
            let proj = row.transpose().dot(&z);
            row -= z.transpose() * proj;
        }
    }
    let x0 = point_in_ball(&mut rng, n, 0.8);
    let noise = DVector::from_fn(m, |_, _| 0.5 * gaussian(&mut rng).abs());
    let b = &a * &x0 + noise;
    ProblemInstance::new(q, c, a, b)
}

/// Standard quadratic program `min xᵀQx` over the simplex, rewritten in the
/// `n−1` variables `y = (x₁,…,xₙ₋₁)` with `xₙ = 1 − eᵀy`. The ball
/// `yᵀy ≤ 1` is redundant; the constraints are `eᵀy ≤ 1` and `−y ≤ 0`.
pub fn qps_instance(q: &DMatrix<f64>) -> Result<ProblemInstance> {
    let n = q.nrows();
    if q.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "Q is {}x{}",
            n,
            q.ncols()
        )));
    }
    if n < 2 {
        return Err(Error::BadOption(
            "the simplex reformulation needs n >= 2".into(),
        ));
    }
    let q = (q + q.transpose()) * 0.5;
    let p = n - 1;
    let mut e = DMatrix::zeros(n, p);
    for i in 0..p {
        e[(i, i)] = 1.0;
        e[(n - 1, i)] = -1.0;
    }
    let qe = &q * &e;
    let hess = e.transpose() * &qe * 2.0;
    let hess = (&hess + hess.transpose()) * 0.5;
    let lin = qe.transpose() * DVector::from_fn(n, |i, _| if i == n - 1 { 2.0 } else { 0.0 });
    let mut a = DMatrix::zeros(n, p);
    a.row_mut(0).fill(1.0);
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    for i in 0..p {
        a[(i + 1, i)] = -1.0;
    }
    Ok(ProblemInstance::new(hess, lin, a, b).with_constant(q[(n - 1, n - 1)]))
}
