//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::random::std_normal;
use crate::{Error, Result};

/// Cholesky factor of a symmetric matrix, escalating a diagonal jitter
/// (starting at `base_jitter` times the mean diagonal) until it succeeds.
pub fn cholesky_jittered(m: &DMatrix<f64>, base_jitter: f64, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = (m.trace() / n.max(1) as f64).abs().max(f64::MIN_POSITIVE);
    let mut jitter = base_jitter.max(1e-14) * scale;
    for _ in 0..12 {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(c) = a.cholesky() {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite(what))
}

/// Given a precision matrix `prec` and linear term `h`, returns
/// `(mean, draw)` for `N(prec^{-1} h, prec^{-1})`.
pub fn gaussian_from_precision<R: Rng + ?Sized>(
    rng: &mut R,
    prec: &DMatrix<f64>,
    h: &DVector<f64>,
    what: &'static str,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = cholesky_jittered(prec, 1e-12, what)?;
    let mean = chol.solve(h);
    let z = DVector::from_fn(h.len(), |_, _| std_normal(rng));
    // L^T x = z  =>  x ~ N(0, (L L^T)^{-1})
    let lt = chol.l().transpose();
    let x = lt.solve_upper_triangular(&z).ok_or(Error::NotPositiveDefinite(what))?;
    let draw = &mean + x;
    Ok((mean, draw))
}

/// Draw from `N(0, L L^T)` given the lower factor `L`.
pub fn draw_with_factor<R: Rng + ?Sized>(rng: &mut R, l: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(l.ncols(), |_, _| std_normal(rng));
    l * z
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    Ok(cholesky_jittered(m, 1e-12, what)?.inverse())
}

/// Orthonormalize the columns of `m` (thin QR), fixing signs so the
/// diagonal of R is non-negative.
pub fn orthonormalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Relative Frobenius error `|a - b| / max(|b|, floor)`.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::chain_rng;

    #[test]
    fn precision_draws_have_right_moments() {
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let h = DVector::from_column_slice(&[1.0, -1.0]);
        let mut rng = chain_rng(1, 0);
        let cov = prec.clone().try_inverse().unwrap();
        let n = 100_000;
        let mut s = DVector::zeros(2);
        let mut ss = DMatrix::zeros(2, 2);
        let mut mean = DVector::zeros(2);
        for _ in 0..n {
            let (m, x) = gaussian_from_precision(&mut rng, &prec, &h, "t").unwrap();
            mean = m;
            s += &x;
            ss += &x * x.transpose();
        }
        let emp_mean = &s / n as f64;
        let emp_cov = &ss / n as f64 - &emp_mean * emp_mean.transpose();
        assert!((&mean - &cov * &h).norm() < 1e-12);
        assert!((emp_mean - mean).norm() < 0.02);
        assert!((emp_cov - cov).norm() < 0.02);
    }

    #[test]
    fn orthonormal_columns() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let q = orthonormalize_columns(&m);
        let g = q.transpose() * &q;
        assert!((g - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        let m = DMatrix::from_element(3, 3, 1.0);
        assert!(cholesky_jittered(&m, 1e-10, "ones").is_ok());
    }
}
