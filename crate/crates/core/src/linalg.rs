//! Small dense helpers on top of nalgebra shared by the solver modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
/// Column `i` of the returned matrix is the eigenvector for `values[i]`.
pub(crate) fn sym_eigen_sorted(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((DVector::zeros(0), DMatrix::zeros(0, 0)));
    }
    let eig =
        SymmetricEigen::try_new(m.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or(Error::EigenFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub(crate) fn lambda_min(m: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = sym_eigen_sorted(m)?;
    Ok(values.get(0).copied().unwrap_or(0.0))
}

/// Full SVD with at least as many rows as columns, so `v_t` spans all of R^cols.
fn padded_svd(m: &DMatrix<f64>) -> SVD<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let (r, c) = m.shape();
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    SVD::new(padded, true, true)
}

/// Singular values in no particular order.
pub(crate) fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    m.clone().singular_values()
}

/// Numerical rank: number of singular values strictly above `threshold`.
pub(crate) fn rank_above(m: &DMatrix<f64>, threshold: f64) -> usize {
    singular_values(m)
        .iter()
        .filter(|&&s| s > threshold)
        .count()
}

/// Scaled singular-value threshold `tol · σ_max · max(rows, cols)`.
pub(crate) fn scaled_threshold(m: &DMatrix<f64>, tol: f64) -> f64 {
    let smax = singular_values(m).iter().cloned().fold(0.0, f64::max);
    tol * smax * m.nrows().max(m.ncols()) as f64
}

/// Orthonormal basis (as columns) of the null space `{x : m x = 0}`.
pub(crate) fn null_space(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let c = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(c, c);
    }
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    let thr = scaled_threshold(m, tol);
    let svd = padded_svd(m);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= thr)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(c, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Unit vector `z` minimising `‖mᵀ z‖`, i.e. the left singular vector of the
/// smallest singular value, together with that singular value.
pub(crate) fn left_null_vector(m: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let mt = m.transpose();
    let svd = padded_svd(&mt);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let (idx, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, &s)| (i, s))
        .expect("nonempty");
    (v_t.row(idx).transpose(), s)
}

/// Minimum-norm solution of the consistent system `a x = b` (rows of `a`
/// linearly independent).
pub(crate) fn min_norm_solution(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(DVector::zeros(a.ncols()));
    }
    let gram = a * a.transpose();
    let y = gram.lu().solve(b)?;
    Some(a.transpose() * y)
}

pub(crate) fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (dst, &src) in rows.iter().enumerate() {
        out.set_row(dst, &m.row(src));
    }
    out
}

pub(crate) fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// `n choose k` saturating at `u128::MAX`.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
