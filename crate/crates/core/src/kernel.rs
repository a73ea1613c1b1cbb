//! Squared-exponential GP kernel over the dose grid and the per-length-scale
//! factorization cache used by the loading updates.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::linalg::cholesky_jittered;
use crate::{Error, Result};

/// Relative diagonal jitter added to every GP covariance.
pub const GP_JITTER: f64 = 1e-8;

/// `alpha2 * exp(-(d_a - d_b)^2 / (2 ell^2))` over all dose pairs.
pub fn kernel_matrix(alpha2: f64, ell: f64, doses: &[f64]) -> DMatrix<f64> {
    let n = doses.len();
    let inv = 1.0 / (2.0 * ell * ell);
    DMatrix::from_fn(n, n, |a, b| {
        let d = doses[a] - doses[b];
        alpha2 * libm::exp(-d * d * inv)
    })
}

/// Unit-variance kernel plus the fixed jitter: the covariance of a GP column
/// is `alpha2` times this matrix.
pub fn jittered_correlation(ell: f64, doses: &[f64]) -> DMatrix<f64> {
    let mut r = kernel_matrix(1.0, ell, doses);
    for i in 0..doses.len() {
        r[(i, i)] += GP_JITTER;
    }
    r
}

/// `size` log-spaced length-scales between half the smallest dose gap and
/// twice the dose range.
pub fn default_ell_grid(doses: &[f64], size: usize) -> Vec<f64> {
    let size = size.max(1);
    let (lo, hi) = if doses.len() >= 2 {
        let min_gap = doses.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let range = doses[doses.len() - 1] - doses[0];
        (0.5 * min_gap, 2.0 * range)
    } else {
        (0.1, 10.0)
    };
    if size == 1 {
        return alloc::vec![libm::sqrt(lo * hi)];
    }
    let (llo, lhi) = (libm::log(lo), libm::log(hi));
    (0..size).map(|i| libm::exp(llo + (lhi - llo) * i as f64 / (size - 1) as f64)).collect()
}

/// One grid point: the jittered correlation matrix and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GridFactor {
    pub ell: f64,
    pub corr: DMatrix<f64>,
    pub chol_l: DMatrix<f64>,
    pub log_det: f64,
}

impl GridFactor {
    /// `v^T R^{-1} v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let w = self.chol_l.solve_lower_triangular(v).expect("triangular factor is non-singular");
        w.norm_squared()
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        let w = self.chol_l.solve_lower_triangular(v).expect("triangular factor is non-singular");
        self.chol_l.transpose().solve_upper_triangular(&w).expect("triangular factor is non-singular")
    }
}

/// Factorizations for every length-scale in the grid (they depend only on
/// the doses, never on the amplitudes).
#[derive(Debug, Clone)]
pub struct KernelCache {
    pub factors: Vec<GridFactor>,
}

impl KernelCache {
    pub fn new(doses: &[f64], grid: &[f64]) -> Result<Self> {
        if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::config("length-scale grid must be non-empty and strictly positive"));
        }
        let factors = grid
            .iter()
            .map(|&ell| {
                let corr = jittered_correlation(ell, doses);
                let chol = corr.clone().cholesky().or_else(|| cholesky_jittered(&corr, 1e-8, "gp kernel").ok());
                let chol = chol.ok_or(Error::NotPositiveDefinite("gp kernel"))?;
                let l = chol.l();
                let log_det = 2.0 * l.diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
                Ok(GridFactor { ell, corr, chol_l: l, log_det })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn get(&self, idx: usize) -> &GridFactor {
        &self.factors[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let k = kernel_matrix(1.0, 1.0, &[0.0, 2.0, 30.0]);
        assert_eq!(k[(0, 0)], 1.0);
        assert!((k[(0, 1)] - 0.135_335_283_236_612_7).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
        let k2 = kernel_matrix(3.0, 1.0, &[0.0, 10.0]);
        assert!(k2[(0, 1)] < 1e-21 * 3.0);
        assert_eq!(k2[(1, 1)], 3.0);
    }

    #[test]
    fn default_grid_spans_dose_gaps() {
        let doses = [0.0, 0.1, 0.5, 1.0];
        let g = default_ell_grid(&doses, 100);
        assert_eq!(g.len(), 100);
        assert!((g[0] - 0.05).abs() < 1e-12);
        assert!((g[99] - 2.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn every_grid_point_factorizes() {
        let doses: Vec<f64> = (0..38).map(|i| -2.0 + 0.1 * i as f64 + 0.01 * (i % 3) as f64).collect();
        let grid = default_ell_grid(&doses, 100);
        let cache = KernelCache::new(&doses, &grid).unwrap();
        for f in &cache.factors {
            let r = &f.chol_l * f.chol_l.transpose();
            assert!((r - &f.corr).norm() < 1e-10);
            assert!(f.log_det.is_finite());
        }
    }
}
