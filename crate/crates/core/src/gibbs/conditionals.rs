//! Full-conditional parameters for every sampler step.
//!
//! Nothing here draws random numbers: each function maps the current state
//! to the parameters of a Gaussian or gamma conditional so the draws can be
//! checked against independent dense oracles.

use alloc::vec::Vec;

// Unused whenever std is linked into the build (its inherent float methods win).
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{Dataset, FeatureKind, Observation};
use crate::kernel::{GridFactor, KernelCache};
use crate::linalg::{cholesky_jittered, spd_inverse};
use crate::math::ln_sum_exp;
use crate::model::{Hyperparams, ModelState};
use crate::{Error, Result};

/// Sufficient statistics of the training data as the sampler sees them.
#[derive(Debug, Clone)]
pub struct ChainData {
    pub n_doses: usize,
    pub n_features: usize,
    pub n_items: usize,
    /// `D x N` replicate counts.
    pub o: DMatrix<f64>,
    /// `D x N` per-dose replicate sums.
    pub ysum: DMatrix<f64>,
    pub obs: Vec<Vec<Observation>>,
    pub x: DMatrix<f64>,
    pub kinds: Vec<FeatureKind>,
    pub n_obs: usize,
}

impl ChainData {
    pub fn new(ds: &Dataset) -> Self {
        let o = ds.counts();
        let mut ysum = DMatrix::zeros(ds.n_doses(), ds.n_items());
        for (i, list) in ds.obs.iter().enumerate() {
            for ob in list {
                ysum[(ob.dose_index, i)] += ob.response;
            }
        }
        Self {
            n_doses: ds.n_doses(),
            n_features: ds.n_features(),
            n_items: ds.n_items(),
            o,
            ysum,
            obs: ds.obs.clone(),
            x: ds.x.clone(),
            kinds: ds.kinds.clone(),
            n_obs: ds.n_train_obs(),
        }
    }
}

/// `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `Ga(shape, rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Gaussian-process posterior for one dose vector under a diagonal
/// Gaussian likelihood with precisions `p` and linear term `b`:
/// precision `C^{-1} + diag(p)`, covariance
/// `C - C G (I + G C G)^{-1} G C` with `G = diag(sqrt(p))`.
///
/// Doses with `p = 0` keep their prior conditioning.
pub struct GpPosterior {
    c: DMatrix<f64>,
    g: DVector<f64>,
    inner: Cholesky<f64, Dyn>,
    pub mean: DVector<f64>,
}

impl GpPosterior {
    pub fn new(c: DMatrix<f64>, p: &DVector<f64>, b: &DVector<f64>) -> Result<Self> {
        let d = c.nrows();
        let g = p.map(|v| libm::sqrt(v.max(0.0)));
        let mut m = DMatrix::identity(d, d);
        for r in 0..d {
            for s in 0..d {
                m[(r, s)] += g[r] * c[(r, s)] * g[s];
            }
        }
        let inner = cholesky_jittered(&m, 1e-14, "gp posterior")?;
        let mut post = Self { c, g, inner, mean: DVector::zeros(d) };
        post.mean = post.apply_cov(b);
        Ok(post)
    }

    /// `Σ v` for the posterior covariance `Σ`.
    pub fn apply_cov(&self, v: &DVector<f64>) -> DVector<f64> {
        let cv = &self.c * v;
        let gcv = self.g.component_mul(&cv);
        let w = self.inner.solve(&gcv);
        cv - &self.c * self.g.component_mul(&w)
    }

    pub fn cov(&self) -> DMatrix<f64> {
        let d = self.c.nrows();
        let gc = DMatrix::from_fn(d, d, |r, s| self.g[r] * self.c[(r, s)]);
        let w = self.inner.solve(&gc);
        let cg = DMatrix::from_fn(d, d, |r, s| self.c[(r, s)] * self.g[s]);
        let cov = &self.c - cg * w;
        (&cov + cov.transpose()) * 0.5
    }

    /// Matheron update: with `f ~ N(0, C)` and `e ~ N(0, I)`,
    /// `Σ (b - diag(p) f - G e) + f` has law `N(Σ b, Σ)`.
    pub fn draw_from(&self, prior_draw: &DVector<f64>, noise: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let p = self.g.component_mul(&self.g);
        let v = b - p.component_mul(prior_draw) - self.g.component_mul(noise);
        self.apply_cov(&v) + prior_draw
    }

    pub fn into_conditional(self) -> ConditionalGaussian {
        let cov = self.cov();
        ConditionalGaussian { mean: self.mean, cov }
    }
}

/// Fitted feature mean `μ^z + Θη + Ξν` for every item.
pub fn feature_mean(st: &ModelState) -> DMatrix<f64> {
    let mut e = &st.theta * &st.eta;
    if st.xi.ncols() > 0 {
        e += &st.xi * &st.nu;
    }
    for (s, mut row) in e.row_iter_mut().enumerate() {
        row.add_scalar_mut(st.mu_z[s]);
    }
    e
}

/// Likelihood precisions and linear term for column `k` of `Λ`:
/// `p_d = Σ_i η_ki² O_di / σ²`, `b_d = Σ_i η_ki (Ysum_di - O_di m_di) / σ²`
/// with `m` the fit from `μ^y` and the other columns.
pub fn lambda_column_stats(k: usize, st: &ModelState, data: &ChainData) -> (DVector<f64>, DVector<f64>) {
    let (d, n) = (data.n_doses, data.n_items);
    let kk = st.lambda.ncols();
    let mut p = DVector::zeros(d);
    let mut b = DVector::zeros(d);
    let inv = 1.0 / st.sigma_y2;
    for i in 0..n {
        let e = st.eta[(k, i)];
        for r in 0..d {
            let o = data.o[(r, i)];
            if o == 0.0 {
                continue;
            }
            let mut m = st.mu_y[r];
            for h in 0..kk {
                if h != k {
                    m += st.lambda[(r, h)] * st.eta[(h, i)];
                }
            }
            p[r] += e * e * o * inv;
            b[r] += e * (data.ysum[(r, i)] - o * m) * inv;
        }
    }
    (p, b)
}

/// GP prior covariance of column `k`: `(φ τ_k)^{-1} (R_ℓ + jitter)`.
pub fn lambda_prior_cov(k: usize, st: &ModelState, factor: &GridFactor) -> DMatrix<f64> {
    &factor.corr * (1.0 / (st.phi * st.tau[k]))
}

pub fn lambda_column_posterior(k: usize, st: &ModelState, data: &ChainData, factor: &GridFactor) -> Result<GpPosterior> {
    let (p, b) = lambda_column_stats(k, st, data);
    GpPosterior::new(lambda_prior_cov(k, st, factor), &p, &b)
}

pub fn step1_lambda_column(k: usize, st: &ModelState, data: &ChainData, factor: &GridFactor) -> Result<ConditionalGaussian> {
    Ok(lambda_column_posterior(k, st, data, factor)?.into_conditional())
}

/// Likelihood terms for `μ^y`: unit loadings on the residual `Y - Λη`.
pub fn mu_y_stats(st: &ModelState, data: &ChainData) -> (DVector<f64>, DVector<f64>) {
    let (d, n) = (data.n_doses, data.n_items);
    let fit = &st.lambda * &st.eta;
    let inv = 1.0 / st.sigma_y2;
    let mut p = DVector::zeros(d);
    let mut b = DVector::zeros(d);
    for i in 0..n {
        for r in 0..d {
            let o = data.o[(r, i)];
            p[r] += o * inv;
            b[r] += (data.ysum[(r, i)] - o * fit[(r, i)]) * inv;
        }
    }
    (p, b)
}

pub fn mu_y_posterior(st: &ModelState, data: &ChainData, factor: &GridFactor) -> Result<GpPosterior> {
    let (p, b) = mu_y_stats(st, data);
    GpPosterior::new(factor.corr.clone(), &p, &b)
}

pub fn step_mu_y(st: &ModelState, data: &ChainData, factor: &GridFactor) -> Result<ConditionalGaussian> {
    Ok(mu_y_posterior(st, data, factor)?.into_conditional())
}

/// `λ_kᵀ R_ℓ^{-1} λ_k` for every column.
pub fn lambda_quad_forms(st: &ModelState, factor: &GridFactor) -> Vec<f64> {
    (0..st.lambda.ncols()).map(|k| factor.quad_form(&st.lambda.column(k).into_owned())).collect()
}

/// Unnormalized log posterior weights of each grid length-scale:
/// `-(K/2) log|R_l| - ½ Σ_k φ τ_k λ_kᵀ R_l^{-1} λ_k`, plus the `μ^y` GP
/// term when `μ^y` is sampled.
pub fn ell_log_weights(st: &ModelState, cache: &KernelCache) -> Result<Vec<f64>> {
    let k = st.lambda.ncols() as f64;
    let my = DVector::from_column_slice(&st.mu_y);
    let w: Vec<f64> = cache
        .factors
        .iter()
        .map(|f| {
            let q: f64 = lambda_quad_forms(st, f).iter().zip(&st.tau).map(|(q, t)| st.phi * t * q).sum();
            let mut lw = -0.5 * k * f.log_det - 0.5 * q;
            if st.mu_y_free {
                lw += -0.5 * f.log_det - 0.5 * f.quad_form(&my);
            }
            lw
        })
        .collect();
    if w.iter().any(|v| !v.is_finite()) {
        let bad = w.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::numerical(
            "step1_ell",
            alloc::format!("non-finite log-weight at grid point {bad} (ell = {})", cache.get(bad).ell),
        ));
    }
    Ok(w)
}

/// Normalized discrete posterior over the length-scale grid.
pub fn ell_posterior(st: &ModelState, cache: &KernelCache) -> Result<Vec<f64>> {
    let w = ell_log_weights(st, cache)?;
    let z = ln_sum_exp(&w);
    Ok(w.iter().map(|v| libm::exp(v - z)).collect())
}

/// `φ | - ~ Ga((g_φ + DK)/2, (g_φ + Σ_k τ_k λ_kᵀ R^{-1} λ_k)/2)`.
pub fn phi_conditional(st: &ModelState, hp: &Hyperparams, factor: &GridFactor) -> GammaParams {
    let (d, k) = st.lambda.shape();
    let q: f64 = lambda_quad_forms(st, factor).iter().zip(&st.tau).map(|(q, t)| t * q).sum();
    GammaParams { shape: 0.5 * (hp.g_phi + (d * k) as f64), rate: 0.5 * (hp.g_phi + q) }
}

/// Per-column precision-weighted squared norms shared by `δ`:
/// `φ λ_kᵀ R^{-1} λ_k + β^{-2} Σ_s θ_sk² / γ²_sk`.
pub fn delta_column_terms(st: &ModelState, factor: &GridFactor) -> Vec<f64> {
    let q = lambda_quad_forms(st, factor);
    (0..st.lambda.ncols())
        .map(|k| {
            let th: f64 = (0..st.theta.nrows()).map(|s| st.theta[(s, k)].powi(2) / st.gamma2[(s, k)]).sum();
            st.phi * q[k] + th / st.beta2
        })
        .collect()
}

/// `δ_h | - ~ Ga(a + (K-h+1)(D+S)/2, 1 + ½ Σ_{k>=h} τ_k^{(-h)} c_k)`,
/// with `τ_k^{(-h)}` the product over `δ_1..δ_k` excluding `δ_h`
/// (`h` zero-based here).
pub fn delta_conditional(h: usize, st: &ModelState, hp: &Hyperparams, col_terms: &[f64]) -> GammaParams {
    let k = st.delta.len();
    let d = st.lambda.nrows();
    let s = st.theta.nrows();
    let a = if h == 0 { hp.a1 } else { hp.a2 };
    let mut rate = 1.0;
    let mut prod = 1.0;
    for c in 0..k {
        if c != h {
            prod *= st.delta[c];
        }
        if c >= h {
            rate += 0.5 * prod * col_terms[c];
        }
    }
    GammaParams { shape: a + 0.5 * ((k - h) * (d + s)) as f64, rate }
}

/// Residual feature block `Z - μ^z - Θη` (for `Ξ, ν`).
pub fn residual_without_theta(st: &ModelState) -> DMatrix<f64> {
    let mut r = &st.z - &st.theta * &st.eta;
    for (s, mut row) in r.row_iter_mut().enumerate() {
        row.add_scalar_mut(-st.mu_z[s]);
    }
    r
}

/// Residual feature block `Z - μ^z - Ξν` (for `Θ`, `η`).
pub fn residual_without_xi(st: &ModelState) -> DMatrix<f64> {
    let mut r = st.z.clone();
    if st.xi.ncols() > 0 {
        r -= &st.xi * &st.nu;
    }
    for (s, mut row) in r.row_iter_mut().enumerate() {
        row.add_scalar_mut(-st.mu_z[s]);
    }
    r
}

fn inv_sigma_x(st: &ModelState) -> Vec<f64> {
    st.sigma_x2.iter().map(|v| 1.0 / v).collect()
}

/// Shared precision of every `ν_i`: `Ξᵀ Σ_X^{-1} Ξ + I`.
pub fn nu_precision(st: &ModelState) -> DMatrix<f64> {
    let (s, j) = st.xi.shape();
    let inv = inv_sigma_x(st);
    let mut prec = DMatrix::identity(j, j);
    for a in 0..j {
        for b in 0..j {
            prec[(a, b)] += (0..s).map(|r| st.xi[(r, a)] * inv[r] * st.xi[(r, b)]).sum::<f64>();
        }
    }
    prec
}

/// Linear terms `Ξᵀ Σ_X^{-1} D` for all items (`J x N`).
pub fn nu_linear(st: &ModelState, resid: &DMatrix<f64>) -> DMatrix<f64> {
    let inv = inv_sigma_x(st);
    let scaled = DMatrix::from_fn(resid.nrows(), resid.ncols(), |r, c| resid[(r, c)] * inv[r]);
    st.xi.transpose() * scaled
}

pub fn step3_nu(i: usize, st: &ModelState) -> Result<ConditionalGaussian> {
    let resid = residual_without_theta(st);
    let prec = nu_precision(st);
    let cov = spd_inverse(&prec, "step3_nu")?;
    let h = nu_linear(st, &resid).column(i).into_owned();
    Ok(ConditionalGaussian { mean: &cov * h, cov })
}

/// Precision and linear term for row `s` of `Ξ`.
pub fn xi_row_system(s: usize, st: &ModelState, resid: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let j = st.xi.ncols();
    let inv = 1.0 / st.sigma_x2[s];
    let mut prec = &st.nu * st.nu.transpose() * inv;
    for c in 0..j {
        prec[(c, c)] += st.kappa[(s, c)] * st.omega[c];
    }
    let h = &st.nu * resid.row(s).transpose() * inv;
    (prec, h)
}

pub fn step3_xi_row(s: usize, st: &ModelState) -> Result<ConditionalGaussian> {
    let resid = residual_without_theta(st);
    let (prec, h) = xi_row_system(s, st, &resid);
    let cov = spd_inverse(&prec, "step3_xi")?;
    Ok(ConditionalGaussian { mean: &cov * h, cov })
}

/// `κ_sj | - ~ Ga((g_κ + 1)/2, (g_κ + ξ_sj² ω_j)/2)`.
pub fn kappa_conditional(s: usize, j: usize, st: &ModelState, hp: &Hyperparams) -> GammaParams {
    GammaParams {
        shape: 0.5 * (hp.g_kappa + 1.0),
        rate: 0.5 * (hp.g_kappa + st.xi[(s, j)].powi(2) * st.omega[j]),
    }
}

/// `ζ_h | - ~ Ga(m + (J-h+1)S/2, 1 + ½ Σ_{j>=h} ω_j^{(-h)} Σ_s κ_sj ξ_sj²)`
/// (`h` zero-based).
pub fn zeta_conditional(h: usize, st: &ModelState, hp: &Hyperparams) -> GammaParams {
    let (s, j) = st.xi.shape();
    let m = if h == 0 { hp.m1 } else { hp.m2 };
    let mut rate = 1.0;
    let mut prod = 1.0;
    for c in 0..j {
        if c != h {
            prod *= st.zeta[c];
        }
        if c >= h {
            let col: f64 = (0..s).map(|r| st.kappa[(r, c)] * st.xi[(r, c)].powi(2)).sum();
            rate += 0.5 * prod * col;
        }
    }
    GammaParams { shape: m + 0.5 * ((j - h) * s) as f64, rate }
}

/// Precision and linear term for row `s` of `Θ`.
pub fn theta_row_system(s: usize, st: &ModelState, resid: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let k = st.theta.ncols();
    let inv = 1.0 / st.sigma_x2[s];
    let mut prec = &st.eta * st.eta.transpose() * inv;
    for c in 0..k {
        prec[(c, c)] += st.tau[c] / (st.beta2 * st.gamma2[(s, c)]);
    }
    let h = &st.eta * resid.row(s).transpose() * inv;
    (prec, h)
}

pub fn step4_theta_row(s: usize, st: &ModelState) -> Result<ConditionalGaussian> {
    let resid = residual_without_xi(st);
    let (prec, h) = theta_row_system(s, st, &resid);
    let cov = spd_inverse(&prec, "step4_theta")?;
    Ok(ConditionalGaussian { mean: &cov * h, cov })
}

/// Conditional of the global precision `1/β²`:
/// `Ga((SK+1)/2, 1/t + ½ Σ τ_k θ_sk² / γ²_sk)`.
pub fn beta_precision_conditional(st: &ModelState) -> GammaParams {
    let (s, k) = st.theta.shape();
    let mut q = 0.0;
    for c in 0..k {
        for r in 0..s {
            q += st.tau[c] * st.theta[(r, c)].powi(2) / st.gamma2[(r, c)];
        }
    }
    GammaParams { shape: 0.5 * ((s * k) as f64 + 1.0), rate: 1.0 / st.t + 0.5 * q }
}

/// Conditional of the local precision `1/γ²_sk`:
/// `Ga(1, 1/b_sk + τ_k θ_sk² / (2β²))`.
pub fn gamma_precision_conditional(s: usize, k: usize, st: &ModelState) -> GammaParams {
    GammaParams { shape: 1.0, rate: 1.0 / st.b[(s, k)] + st.tau[k] * st.theta[(s, k)].powi(2) / (2.0 * st.beta2) }
}

/// Conditional of `1/t`: `Ga(1, 1 + 1/β²)`.
pub fn t_precision_conditional(st: &ModelState) -> GammaParams {
    GammaParams { shape: 1.0, rate: 1.0 + 1.0 / st.beta2 }
}

/// Conditional of `1/b_sk`: `Ga(1, 1 + 1/γ²_sk)`.
pub fn b_precision_conditional(s: usize, k: usize, st: &ModelState) -> GammaParams {
    GammaParams { shape: 1.0, rate: 1.0 + 1.0 / st.gamma2[(s, k)] }
}

/// Feature-side part of every `η_i` precision: `Θᵀ Σ_X^{-1} Θ + I`.
pub fn eta_feature_precision(st: &ModelState) -> DMatrix<f64> {
    let (s, k) = st.theta.shape();
    let inv = inv_sigma_x(st);
    let mut prec = DMatrix::identity(k, k);
    for a in 0..k {
        for b in 0..k {
            prec[(a, b)] += (0..s).map(|r| st.theta[(r, a)] * inv[r] * st.theta[(r, b)]).sum::<f64>();
        }
    }
    prec
}

/// Precision and linear term for `η_i` given the feature-side precision and
/// the feature residual `Z - μ^z - Ξν`. Response rows enter only at doses
/// where item `i` was observed, weighted by `O_di / σ²_Y`.
pub fn eta_system(
    i: usize,
    st: &ModelState,
    data: &ChainData,
    feature_prec: &DMatrix<f64>,
    resid: &DMatrix<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let (s, k) = st.theta.shape();
    let inv = inv_sigma_x(st);
    let mut prec = feature_prec.clone();
    let mut h = DVector::zeros(k);
    for a in 0..k {
        h[a] = (0..s).map(|r| st.theta[(r, a)] * inv[r] * resid[(r, i)]).sum();
    }
    let inv_y = 1.0 / st.sigma_y2;
    for r in 0..data.n_doses {
        let o = data.o[(r, i)];
        if o == 0.0 {
            continue;
        }
        let w = o * inv_y;
        let target = data.ysum[(r, i)] - o * st.mu_y[r];
        for a in 0..k {
            let la = st.lambda[(r, a)];
            h[a] += la * target * inv_y;
            for b in 0..k {
                prec[(a, b)] += w * la * st.lambda[(r, b)];
            }
        }
    }
    (prec, h)
}

pub fn step5_eta(i: usize, st: &ModelState, data: &ChainData) -> Result<ConditionalGaussian> {
    let resid = residual_without_xi(st);
    let fp = eta_feature_precision(st);
    let (prec, h) = eta_system(i, st, data, &fp, &resid);
    let cov = spd_inverse(&prec, "step5_eta")?;
    Ok(ConditionalGaussian { mean: &cov * h, cov })
}

/// Residual sum of squares of the responses over every replicate.
pub fn response_rss(st: &ModelState, data: &ChainData) -> f64 {
    let mut rss = 0.0;
    for (i, list) in data.obs.iter().enumerate() {
        for ob in list {
            let mut m = st.mu_y[ob.dose_index];
            for h in 0..st.lambda.ncols() {
                m += st.lambda[(ob.dose_index, h)] * st.eta[(h, i)];
            }
            rss += (ob.response - m).powi(2);
        }
    }
    rss
}

/// Conditional of `1/σ²_Y`: `Ga((a + N_Y)/2, (b + RSS_Y)/2)`.
pub fn sigma_y_precision_conditional(st: &ModelState, hp: &Hyperparams, data: &ChainData) -> GammaParams {
    GammaParams {
        shape: 0.5 * (hp.a_sig_y + data.n_obs as f64),
        rate: 0.5 * (hp.b_sig_y + response_rss(st, data)),
    }
}

/// Conditionals of `1/σ²_{X,s}`; `None` for binary features.
pub fn sigma_x_precision_conditionals(st: &ModelState, hp: &Hyperparams) -> Vec<Option<GammaParams>> {
    let e = feature_mean(st);
    let n = st.z.ncols() as f64;
    (0..st.z.nrows())
        .map(|s| {
            if st.sigma_x_fixed[s] {
                return None;
            }
            let rss: f64 = st.z.row(s).iter().zip(e.row(s).iter()).map(|(z, m)| (z - m).powi(2)).sum();
            Some(GammaParams { shape: 0.5 * (hp.a_sig_x + n), rate: 0.5 * (hp.b_sig_x + rss) })
        })
        .collect()
}

/// Normal conditional of `μ^z_s` (prior `N(0, 1/ζ_s)`), as `(mean, var)`.
pub fn mu_z_conditional(s: usize, st: &ModelState) -> (f64, f64) {
    let fit = {
        let mut f = st.theta.row(s) * &st.eta;
        if st.xi.ncols() > 0 {
            f += st.xi.row(s) * &st.nu;
        }
        f
    };
    let inv = 1.0 / st.sigma_x2[s];
    let n = st.z.ncols() as f64;
    let prec = st.mu_z_prec[s] + n * inv;
    let h: f64 = st.z.row(s).iter().zip(fit.iter()).map(|(z, f)| z - f).sum::<f64>() * inv;
    (h / prec, 1.0 / prec)
}

/// Scale-mixture precision of the Cauchy prior: `ζ_s | μ ~ Ga(1, (1 + μ²)/2)`.
pub fn mu_z_precision_conditional(s: usize, st: &ModelState) -> GammaParams {
    GammaParams { shape: 1.0, rate: 0.5 * (1.0 + st.mu_z[s].powi(2)) }
}

/// Bounds of the latent surrogate for a non-continuous entry.
pub fn latent_bounds(kind: FeatureKind, x: f64) -> Option<(f64, f64)> {
    match kind {
        FeatureKind::Binary => Some(if x > 0.5 { (0.0, f64::INFINITY) } else { (f64::NEG_INFINITY, 0.0) }),
        FeatureKind::Count => Some(if x >= 1.0 { (x - 1.0, x) } else { (f64::NEG_INFINITY, 0.0) }),
        _ => None,
    }
}

/// Complete-data log likelihood of responses and latent features.
pub fn log_likelihood(st: &ModelState, data: &ChainData) -> f64 {
    use crate::math::LN_SQRT_2PI;
    let n_y = data.n_obs as f64;
    let mut ll = -n_y * LN_SQRT_2PI - 0.5 * n_y * libm::log(st.sigma_y2) - 0.5 * response_rss(st, data) / st.sigma_y2;
    let e = feature_mean(st);
    for s in 0..st.z.nrows() {
        let v = st.sigma_x2[s];
        for i in 0..st.z.ncols() {
            let d = st.z[(s, i)] - e[(s, i)];
            ll += -LN_SQRT_2PI - 0.5 * libm::log(v) - 0.5 * d * d / v;
        }
    }
    ll
}
