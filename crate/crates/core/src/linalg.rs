//! Dense matrix kernel: Moore-Penrose pseudo-inverse, semidefiniteness and
//! range-inclusion tests.
//!
//! All tolerances are relative to the scale of the operands with an absolute
//! floor of [`ABS_TOL_FLOOR`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const ABS_TOL_FLOOR: f64 = 1e-14;


/// Singular-value cutoff used by [`pinv`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Cutoff {
    /// `max(rows, cols) * eps * sigma_max`.
    #[default]
    Auto,
    Absolute(f64),
}

fn band(tol: f64, scale: f64) -> f64 {
    (tol * (1.0 + scale)).max(ABS_TOL_FLOOR)
}

pub fn is_finite(m: &Matrix) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Symmetry test with the band `1e-12 * (1 + max|M_ij|)`.
pub fn is_symmetric(m: &Matrix) -> bool {
    if !m.is_square() {
        return false;
    }
    let maxabs = m.amax();
    let tol = 1e-12 * (1.0 + maxabs);
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// `(M + M^T) / 2`. The result is exactly symmetric.
pub fn symmetrize(m: &Matrix) -> Matrix {
    let n = m.nrows();
    let mut out = m.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = avg;
            out[(j, i)] = avg;
        }
    }
    out
}

struct Svd {
    /// Nonincreasing.
    s: Vec<f64>,
    u: Matrix,
    v: Matrix,
}

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn svd(m: &Matrix) -> Result<Svd> {
    let dec = to_faer(m).thin_svd().map_err(|e| {
        Error::NumericalFailure(format!("SVD of {}x{} matrix failed: {e:?}", m.nrows(), m.ncols()))
    })?;
    let (u, v) = (dec.U(), dec.V());
    Ok(Svd {
        s: dec.S().column_vector().iter().copied().collect(),
        u: Matrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        v: Matrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    })
}

/// Moore-Penrose pseudo-inverse via SVD, zeroing singular values at or
/// below the cutoff.
pub fn pinv(m: &Matrix, cutoff: Cutoff) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let dec = svd(m)?;
    let s = &dec.s;
    let smax = s.first().copied().unwrap_or(0.0);
    let cut = match cutoff {
        Cutoff::Auto => rows.max(cols) as f64 * f64::EPSILON * smax,
        Cutoff::Absolute(c) => c,
    };
    let (u, v) = (&dec.u, &dec.v);
    let mut out = Matrix::zeros(cols, rows);
    for (k, &sk) in s.iter().enumerate() {
        if sk > cut && sk > 0.0 {
            // out += v_k * u_k^T / s_k
            let inv = 1.0 / sk;
            for i in 0..cols {
                let vik = v[(i, k)] * inv;
                if vik == 0.0 {
                    continue;
                }
                for j in 0..rows {
                    out[(i, j)] += vik * u[(j, k)];
                }
            }
        }
    }
    Ok(out)
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &Matrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(svd(m)?.s.first().copied().unwrap_or(0.0))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let ev = to_faer(m).self_adjoint_eigenvalues(faer::Side::Lower).map_err(|e| {
        Error::NumericalFailure(format!(
            "symmetric eigendecomposition of {}x{} matrix failed: {e:?}",
            m.nrows(),
            m.ncols()
        ))
    })?;
    Ok(ev)
}

/// `true` iff `lambda_min(M) >= -tol * (1 + ||M||_2)`.
pub fn is_psd(m: &Matrix, tol: f64) -> Result<bool> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "is_psd needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.is_empty() {
        return Ok(true);
    }
    let ev = sym_eigenvalues(m)?;
    let norm = ev.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    Ok(ev[0] >= -band(tol, norm))
}

/// `true` iff the column space of `n` lies in the range of `m`, measured as
/// `||(I - M M^+) N||_F <= tol * (1 + ||N||_F)`.
pub fn range_contains(m: &Matrix, n: &Matrix, tol: f64) -> Result<bool> {
    Ok(range_residual(m, n)? <= band(tol, n.norm()))
}

/// `||(I - M M^+) N||_F`.
pub fn range_residual(m: &Matrix, n: &Matrix) -> Result<f64> {
    if m.nrows() != n.nrows() {
        return Err(Error::Dimension(format!(
            "range_contains: M has {} rows, N has {}",
            m.nrows(),
            n.nrows()
        )));
    }
    let mp = pinv(m, Cutoff::Auto)?;
    let proj = m * (&mp * n);
    Ok((n - proj).norm())
}

/// `<M^+ w, w>`. For `w` outside the range of `M` this is the quadratic form of
/// the range-projected `w`.
pub fn psd_quadform_via_pinv(m: &Matrix, w: &Vector) -> Result<f64> {
    if m.nrows() != w.len() {
        return Err(Error::Dimension(format!(
            "quadratic form: matrix is {}x{}, vector has length {}",
            m.nrows(),
            m.ncols(),
            w.len()
        )));
    }
    let mp = pinv(m, Cutoff::Auto)?;
    Ok((&mp * w).dot(w))
}
