//! Post-hoc resolution of rotation, label and sign ambiguity in saved draws.
//!
//! Each draw's stacked loadings `[Λ; Θ]` are varimax-rotated and their
//! columns greedily matched (with sign fixes) to a pivot draw, the medoid of
//! a subsample under the rotation-invariant distance `‖ΩΩᵀ - Ω'Ω'ᵀ‖_F`.
//! The combined orthogonal transform `R` is applied as `Λ R`, `Θ R`, `Rᵀ η`
//! and stored on the draw, so identifiable functionals are unchanged.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::gibbs::PosteriorDraws;
use crate::{Error, Result};

/// Draws considered when picking the pivot.
pub const PIVOT_SUBSAMPLE: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// `permutations[t][c]`: column of draw `t` (after varimax) placed at
    /// position `c`.
    pub permutations: Vec<Vec<usize>>,
    pub signs: Vec<Vec<i8>>,
    pub pivot: usize,
    /// Mean relative distance of aligned loadings to the pivot.
    pub misalignment: f64,
    pub warnings: Vec<String>,
}

/// Varimax rotation (Kaiser-normalized). Returns `(m T, T)`.
pub fn varimax(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, k) = m.shape();
    let mut t = DMatrix::identity(k, k);
    if k < 2 || p == 0 {
        return (m.clone(), t);
    }
    let scale: Vec<f64> = (0..p)
        .map(|r| {
            let n = m.row(r).norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    let x = DMatrix::from_fn(p, k, |r, c| m[(r, c)] / scale[r]);
    let mut d = 0.0;
    for _ in 0..1000 {
        let z = &x * &t;
        let col_ss: Vec<f64> = (0..k).map(|c| z.column(c).norm_squared()).collect();
        let target = DMatrix::from_fn(p, k, |r, c| {
            let v = z[(r, c)];
            v * v * v - v * col_ss[c] / p as f64
        });
        let b = x.transpose() * target;
        let svd = b.svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vt");
        t = u * vt;
        let d_past = d;
        d = svd.singular_values.sum();
        if d <= d_past * (1.0 + 1e-12) {
            break;
        }
    }
    (m * &t, t)
}

fn stacked(d: &crate::gibbs::Draw) -> DMatrix<f64> {
    let (dd, k) = d.lambda.shape();
    let s = d.theta.nrows();
    let mut m = DMatrix::zeros(dd + s, k);
    m.rows_mut(0, dd).copy_from(&d.lambda);
    m.rows_mut(dd, s).copy_from(&d.theta);
    m
}

/// Greedy one-to-one matching of the columns of `m` to those of `target`
/// by absolute inner product. Returns `(perm, signs)` with
/// `perm[c]` the column of `m` assigned to target column `c`.
pub fn greedy_match(m: &DMatrix<f64>, target: &DMatrix<f64>) -> (Vec<usize>, Vec<i8>) {
    let k = m.ncols();
    let ip = target.transpose() * m;
    let mut perm = alloc::vec![usize::MAX; k];
    let mut signs = alloc::vec![1i8; k];
    let mut used_t = alloc::vec![false; k];
    let mut used_m = alloc::vec![false; k];
    for _ in 0..k {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for c in (0..k).filter(|&c| !used_t[c]) {
            for j in (0..k).filter(|&j| !used_m[j]) {
                let v = ip[(c, j)].abs();
                if v > best.0 {
                    best = (v, c, j);
                }
            }
        }
        let (_, c, j) = best;
        used_t[c] = true;
        used_m[j] = true;
        perm[c] = j;
        signs[c] = if ip[(c, j)] < 0.0 { -1 } else { 1 };
    }
    (perm, signs)
}

/// Align every draw in place of a copy; see the module docs.
pub fn align_draws(raw: &PosteriorDraws) -> Result<(PosteriorDraws, AlignmentReport)> {
    if raw.len() < 2 {
        return Err(Error::data("alignment needs at least two saved draws"));
    }
    let k = raw.n_factors();
    let mut warnings = Vec::new();
    let loadings: Vec<DMatrix<f64>> = raw.draws.iter().map(stacked).collect();

    if loadings.iter().all(|m| m.iter().all(|v| *v == 0.0)) {
        warnings.push(String::from("all loadings are zero; identity alignment used"));
        let report = AlignmentReport {
            permutations: alloc::vec![(0..k).collect(); raw.len()],
            signs: alloc::vec![alloc::vec![1; k]; raw.len()],
            pivot: 0,
            misalignment: 0.0,
            warnings,
        };
        return Ok((raw.clone(), report));
    }

    let step = (raw.len() / PIVOT_SUBSAMPLE).max(1);
    let sub: Vec<usize> = (0..raw.len()).step_by(step).collect();
    let outers: Vec<DMatrix<f64>> = sub.iter().map(|&t| &loadings[t] * loadings[t].transpose()).collect();
    let mut pivot = sub[0];
    let mut best = f64::INFINITY;
    for (a, &ta) in sub.iter().enumerate() {
        let total: f64 = (0..sub.len()).map(|b| (&outers[a] - &outers[b]).norm()).sum();
        if total < best {
            best = total;
            pivot = ta;
        }
    }
    let (pivot_rot, _) = varimax(&loadings[pivot]);
    let pivot_norm = pivot_rot.norm().max(f64::MIN_POSITIVE);

    let mut out = raw.clone();
    let mut permutations = Vec::with_capacity(raw.len());
    let mut signs_all = Vec::with_capacity(raw.len());
    let mut mis = 0.0;
    for (t, draw) in out.draws.iter_mut().enumerate() {
        let (rot, vt) = varimax(&loadings[t]);
        let (perm, signs) = greedy_match(&rot, &pivot_rot);
        // R = T P S: column c of the result is sign_c times column perm[c] of m T.
        let mut ps = DMatrix::zeros(k, k);
        for c in 0..k {
            ps[(perm[c], c)] = f64::from(signs[c]);
        }
        let r = &vt * ps;
        draw.lambda = &draw.lambda * &r;
        draw.theta = &draw.theta * &r;
        draw.eta = r.transpose() * &draw.eta;
        draw.rotation = &draw.rotation * &r;
        let aligned = &loadings[t] * &r;
        mis += (&aligned - &pivot_rot).norm() / pivot_norm;
        permutations.push(perm);
        signs_all.push(signs);
    }
    let report = AlignmentReport {
        permutations,
        signs: signs_all,
        pivot,
        misalignment: mis / raw.len() as f64,
        warnings,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{Draw, PosteriorDraws};
    use crate::random::{chain_rng, std_normal};
    use alloc::vec;

    fn base_draw(lambda: DMatrix<f64>, theta: DMatrix<f64>, eta: DMatrix<f64>) -> Draw {
        let k = lambda.ncols();
        Draw {
            chain: 0,
            iter: 0,
            lambda,
            theta,
            xi: DMatrix::zeros(0, 0),
            eta,
            tau: vec![1.0; k],
            omega: vec![],
            phi: 1.0,
            ell: 1.0,
            beta2: 1.0,
            sigma_y2: 1.0,
            sigma_x2: vec![],
            mu_y: vec![],
            mu_z: vec![],
            rotation: DMatrix::identity(k, k),
        }
    }

    fn container(draws: Vec<Draw>) -> PosteriorDraws {
        PosteriorDraws {
            items: vec![],
            holdout: vec![],
            doses: vec![],
            feature_ids: vec![],
            y_scale: 1.0,
            draws,
            traces: vec![],
        }
    }

    #[test]
    fn unscrambles_permuted_sign_flipped_copies() {
        let mut rng = chain_rng(1, 0);
        let lam = DMatrix::from_fn(6, 3, |_, _| std_normal(&mut rng));
        let th = DMatrix::from_fn(5, 3, |_, _| std_normal(&mut rng));
        let eta = DMatrix::from_fn(3, 4, |_, _| std_normal(&mut rng));
        let perms = [[0usize, 1, 2], [2, 0, 1], [1, 2, 0], [0, 2, 1]];
        let flips = [[1.0, 1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, -1.0, -1.0]];
        let draws: Vec<Draw> = perms
            .iter()
            .zip(&flips)
            .map(|(p, f)| {
                let mut q = DMatrix::zeros(3, 3);
                for c in 0..3 {
                    q[(p[c], c)] = f[c];
                }
                base_draw(&lam * &q, &th * &q, q.transpose() * &eta)
            })
            .collect();
        let (aligned, rep) = align_draws(&container(draws)).unwrap();
        assert!(rep.misalignment < 1e-10, "{}", rep.misalignment);
        for d in &aligned.draws[1..] {
            assert!((&d.lambda - &aligned.draws[0].lambda).norm() < 1e-10);
        }
    }

    #[test]
    fn reconstruction_is_unchanged() {
        let mut rng = chain_rng(2, 0);
        let draws: Vec<Draw> = (0..5)
            .map(|_| {
                base_draw(
                    DMatrix::from_fn(4, 3, |_, _| std_normal(&mut rng)),
                    DMatrix::from_fn(6, 3, |_, _| std_normal(&mut rng)),
                    DMatrix::from_fn(3, 7, |_, _| std_normal(&mut rng)),
                )
            })
            .collect();
        let raw = container(draws);
        let (aligned, _) = align_draws(&raw).unwrap();
        for (a, r) in aligned.draws.iter().zip(&raw.draws) {
            assert!((&a.lambda * &a.eta - &r.lambda * &r.eta).norm() < 1e-12);
            assert!((&a.theta * a.theta.transpose() - &r.theta * r.theta.transpose()).norm() < 1e-12);
            assert!((a.eta_original() - &r.eta).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_loadings_identity() {
        let z = |r, c| DMatrix::zeros(r, c);
        let raw = container(vec![base_draw(z(3, 2), z(2, 2), z(2, 3)), base_draw(z(3, 2), z(2, 2), z(2, 3))]);
        let (aligned, rep) = align_draws(&raw).unwrap();
        assert_eq!(aligned, raw);
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn varimax_is_orthogonal() {
        let mut rng = chain_rng(3, 0);
        let m = DMatrix::from_fn(10, 4, |_, _| std_normal(&mut rng));
        let (r, t) = varimax(&m);
        assert!((t.transpose() * &t - DMatrix::identity(4, 4)).norm() < 1e-12);
        assert!((&m * &t - r).norm() < 1e-12);
    }
}
