//! Model parameters, hyperparameters, initialization and the joint prior.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind};
use crate::kernel::{default_ell_grid, jittered_correlation};
use crate::math::{ln_gamma_pdf, ln_inv_gamma_pdf, ln_normal, LN_SQRT_2PI};
use crate::random::{chain_rng, gamma, inv_gamma, normal, std_normal, ChainRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Number of shared (curve-relevant) factors.
    pub k: usize,
    /// Number of feature-only factors; 0 disables the `Ξν` block.
    pub j: usize,
    pub a1: f64,
    pub a2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g_phi: f64,
    pub g_kappa: f64,
    pub a_sig_y: f64,
    pub b_sig_y: f64,
    pub a_sig_x: f64,
    pub b_sig_x: f64,
    /// Explicit length-scale grid; empty means derive from the doses.
    pub ell_grid: Vec<f64>,
    pub ell_grid_size: usize,
    /// `μ^y` pinned at zero (responses already on a zero baseline).
    pub center_y: bool,
    /// `μ^z` pinned at zero for continuous features (they are standardized).
    pub center_x: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 5,
            j: 5,
            a1: 2.1,
            a2: 3.1,
            m1: 2.1,
            m2: 3.1,
            g_phi: 1.0,
            g_kappa: 1.0,
            a_sig_y: 1.0,
            b_sig_y: 1.0,
            a_sig_x: 1.0,
            b_sig_x: 1.0,
            ell_grid: Vec::new(),
            ell_grid_size: 100,
            center_y: false,
            center_x: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("K must be at least 1"));
        }
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("m1", self.m1), ("m2", self.m2)] {
            if !(v > 1.0) {
                return Err(Error::config(alloc::format!("{name} must exceed 1, got {v}")));
            }
        }
        for (name, v) in [
            ("g_phi", self.g_phi),
            ("g_kappa", self.g_kappa),
            ("a_sig_y", self.a_sig_y),
            ("b_sig_y", self.b_sig_y),
            ("a_sig_x", self.a_sig_x),
            ("b_sig_x", self.b_sig_x),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(alloc::format!("{name} must be positive, got {v}")));
            }
        }
        if self.ell_grid.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::config("length-scale grid values must be positive"));
        }
        if self.ell_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("length-scale grid must be strictly increasing"));
        }
        if self.ell_grid.is_empty() && self.ell_grid_size == 0 {
            return Err(Error::config("length-scale grid is empty"));
        }
        Ok(())
    }

    /// Copy with a concrete length-scale grid for `doses`.
    pub fn resolved(&self, doses: &[f64]) -> Self {
        let mut hp = self.clone();
        if hp.ell_grid.is_empty() {
            hp.ell_grid = default_ell_grid(doses, hp.ell_grid_size);
        }
        hp.ell_grid_size = hp.ell_grid.len();
        hp
    }

    /// Informative `σ²_Y` prior centred on an empirical noise variance
    /// (e.g. the variance of low-dose observations), worth `weight`
    /// pseudo-observations.
    pub fn with_informative_sigma_y(mut self, empirical_var: f64, weight: f64) -> Self {
        self.a_sig_y = weight;
        self.b_sig_y = weight * empirical_var;
        self
    }
}

/// Full parameter block of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub doses: Vec<f64>,
    /// `D x K`, GP-smooth columns.
    pub lambda: DMatrix<f64>,
    /// `S x K`, horseshoe-sparse.
    pub theta: DMatrix<f64>,
    /// `S x J`, MGP-shrunk.
    pub xi: DMatrix<f64>,
    /// `K x N`.
    pub eta: DMatrix<f64>,
    /// `J x N`.
    pub nu: DMatrix<f64>,
    /// `S x N` latent continuous surrogate of `X`.
    pub z: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub tau: Vec<f64>,
    pub phi: f64,
    pub ell_index: usize,
    pub ell: f64,
    pub beta2: f64,
    pub gamma2: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub t: f64,
    pub kappa: DMatrix<f64>,
    pub zeta: Vec<f64>,
    pub omega: Vec<f64>,
    pub sigma_y2: f64,
    pub sigma_x2: Vec<f64>,
    pub mu_z: Vec<f64>,
    /// Precisions of the scale-mixture (Cauchy) prior on `μ^z`.
    pub mu_z_prec: Vec<f64>,
    pub mu_y: Vec<f64>,
    /// Features whose `μ^z` is sampled.
    pub mu_z_free: Vec<bool>,
    /// Binary features: `σ²_X` pinned at one.
    pub sigma_x_fixed: Vec<bool>,
    pub mu_y_free: bool,
}

/// Cumulative products `τ_k = ∏_{h<=k} δ_h`.
pub fn cumulative_products(delta: &[f64]) -> Vec<f64> {
    let mut acc = 1.0;
    delta
        .iter()
        .map(|d| {
            acc *= d;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    RandomSmall,
    Svd,
}

impl ModelState {
    pub fn n_factors(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn n_feature_factors(&self) -> usize {
        self.xi.ncols()
    }

    /// GP amplitudes `α²_k = (φ τ_k)^{-1}`.
    pub fn alpha2(&self) -> Vec<f64> {
        self.tau.iter().map(|t| 1.0 / (self.phi * t)).collect()
    }

    pub fn refresh_products(&mut self) {
        self.tau = cumulative_products(&self.delta);
        self.omega = cumulative_products(&self.zeta);
    }

    /// Check positivity and structural invariants.
    pub fn check(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::numerical(name, alloc::format!("non-positive or non-finite value {v}")))
            }
        };
        pos("phi", self.phi)?;
        pos("beta2", self.beta2)?;
        pos("t", self.t)?;
        pos("sigma_y2", self.sigma_y2)?;
        pos("ell", self.ell)?;
        for &v in self.delta.iter().chain(&self.tau).chain(&self.zeta).chain(&self.omega) {
            pos("shrinkage", v)?;
        }
        for &v in self.gamma2.iter().chain(self.b.iter()).chain(self.kappa.iter()).chain(&self.mu_z_prec) {
            pos("local shrinkage", v)?;
        }
        for (s, &v) in self.sigma_x2.iter().enumerate() {
            pos("sigma_x2", v)?;
            if self.sigma_x_fixed[s] && v != 1.0 {
                return Err(Error::numerical("sigma_x2", "binary feature variance must stay at 1"));
            }
        }
        let tau = cumulative_products(&self.delta);
        let omega = cumulative_products(&self.zeta);
        if tau.iter().zip(&self.tau).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs())
            || omega.iter().zip(&self.omega).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs())
        {
            return Err(Error::numerical("shrinkage", "tau/omega out of sync with delta/zeta"));
        }
        Ok(())
    }
}

fn initial_z(ds: &Dataset) -> DMatrix<f64> {
    let mut z = ds.x.clone();
    for (s, kind) in ds.kinds.iter().enumerate() {
        for i in 0..ds.n_items() {
            let v = ds.x[(s, i)];
            z[(s, i)] = match kind {
                FeatureKind::Binary => {
                    if v > 0.5 {
                        0.5
                    } else {
                        -0.5
                    }
                }
                FeatureKind::Count => {
                    if v >= 1.0 {
                        v - 0.5
                    } else {
                        -0.5
                    }
                }
                _ => v,
            };
        }
    }
    z
}

/// Per-item, per-dose replicate means; unobserved cells take the dose mean
/// over items (0 where no item was observed).
fn imputed_response_means(ds: &Dataset) -> DMatrix<f64> {
    let (d, n) = (ds.n_doses(), ds.n_items());
    let mut sum = DMatrix::<f64>::zeros(d, n);
    let mut cnt = DMatrix::<f64>::zeros(d, n);
    for (i, list) in ds.obs.iter().enumerate() {
        for o in list {
            sum[(o.dose_index, i)] += o.response;
            cnt[(o.dose_index, i)] += 1.0;
        }
    }
    let dose_mean: Vec<f64> = (0..d)
        .map(|r| {
            let c: f64 = cnt.row(r).sum();
            if c > 0.0 {
                sum.row(r).sum() / c
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(d, n, |r, c| if cnt[(r, c)] > 0.0 { sum[(r, c)] / cnt[(r, c)] } else { dose_mean[r] })
}

/// Leading-`k` factorization `M ≈ (U Σ / √N)(√N Vᵀ)`, zero-padded when `M`
/// has fewer than `k` singular triplets.
fn leading_factors(m: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, n) = (m.nrows(), m.ncols());
    let mut load = DMatrix::zeros(p, k);
    let mut scores = DMatrix::zeros(k, n);
    if k == 0 || p == 0 || n == 0 {
        return (load, scores);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vt");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sqrt_n = libm::sqrt(n as f64);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let sv = svd.singular_values[idx];
        load.set_column(col, &(u.column(idx) * (sv / sqrt_n)));
        scores.set_row(col, &(vt.row(idx) * sqrt_n));
    }
    (load, scores)
}

/// Initial state for a chain.
///
/// `Svd` takes `[Λ; Θ]` and `η` from the leading singular triplets of the
/// stacked (imputed `Y`, latent `X`) matrix, `Ξ` and `ν` from the residual,
/// and noise variances from residual spreads. `RandomSmall` draws
/// everything near zero (positive quantities log-normally near one).
pub fn init_state(ds: &Dataset, hp: &Hyperparams, mode: InitMode, seed: u64) -> Result<ModelState> {
    hp.validate()?;
    let hp = hp.resolved(&ds.doses);
    let (d, s, n) = (ds.n_doses(), ds.n_features(), ds.n_items());
    let (k, j) = (hp.k, hp.j);
    let mut rng = chain_rng(seed, u64::MAX);
    let mu_z_free: Vec<bool> = ds.kinds.iter().map(|kd| !hp.center_x || !kd.is_continuous()).collect();
    let sigma_x_fixed: Vec<bool> = ds.kinds.iter().map(|kd| *kd == FeatureKind::Binary).collect();
    let z = initial_z(ds);
    let ell_index = hp.ell_grid.len() / 2;

    let mut st = ModelState {
        doses: ds.doses.clone(),
        lambda: DMatrix::zeros(d, k),
        theta: DMatrix::zeros(s, k),
        xi: DMatrix::zeros(s, j),
        eta: DMatrix::zeros(k, n),
        nu: DMatrix::zeros(j, n),
        z,
        delta: alloc::vec![1.0; k],
        tau: alloc::vec![1.0; k],
        phi: 1.0,
        ell_index,
        ell: hp.ell_grid[ell_index],
        beta2: 1.0,
        gamma2: DMatrix::from_element(s, k, 1.0),
        b: DMatrix::from_element(s, k, 1.0),
        t: 1.0,
        kappa: DMatrix::from_element(s, j, 1.0),
        zeta: alloc::vec![1.0; j],
        omega: alloc::vec![1.0; j],
        sigma_y2: 1.0,
        sigma_x2: alloc::vec![1.0; s],
        mu_z: alloc::vec![0.0; s],
        mu_z_prec: alloc::vec![1.0; s],
        mu_y: alloc::vec![0.0; d],
        mu_z_free,
        sigma_x_fixed,
        mu_y_free: !hp.center_y,
    };

    match mode {
        InitMode::RandomSmall => init_random_small(&mut st, &mut rng),
        InitMode::Svd => init_svd(&mut st, ds, k, j)?,
    }
    st.refresh_products();
    st.check()?;
    Ok(st)
}

fn init_random_small(st: &mut ModelState, rng: &mut ChainRng) {
    let sd = 0.1;
    let fill = |m: &mut DMatrix<f64>, rng: &mut ChainRng| {
        for v in m.iter_mut() {
            *v = normal(rng, 0.0, sd);
        }
    };
    fill(&mut st.lambda, rng);
    fill(&mut st.theta, rng);
    fill(&mut st.xi, rng);
    fill(&mut st.eta, rng);
    fill(&mut st.nu, rng);
    let pos = |rng: &mut ChainRng| libm::exp(normal(rng, 0.0, sd));
    for v in st.delta.iter_mut().chain(st.zeta.iter_mut()).chain(st.mu_z_prec.iter_mut()) {
        *v = pos(rng);
    }
    for v in st.gamma2.iter_mut().chain(st.b.iter_mut()).chain(st.kappa.iter_mut()) {
        *v = pos(rng);
    }
    st.phi = pos(rng);
    st.beta2 = pos(rng);
    st.t = pos(rng);
    st.sigma_y2 = pos(rng);
    for (s, v) in st.sigma_x2.iter_mut().enumerate() {
        *v = if st.sigma_x_fixed[s] { 1.0 } else { pos(rng) };
    }
    for (s, v) in st.mu_z.iter_mut().enumerate() {
        if st.mu_z_free[s] {
            *v = normal(rng, 0.0, sd);
        }
    }
    if st.mu_y_free {
        for v in st.mu_y.iter_mut() {
            *v = normal(rng, 0.0, sd);
        }
    }
}

fn init_svd(st: &mut ModelState, ds: &Dataset, k: usize, j: usize) -> Result<()> {
    let (d, s, n) = (ds.n_doses(), ds.n_features(), ds.n_items());
    if n < k {
        return Err(Error::data(alloc::format!("SVD initialization needs at least K={k} items, got {n}")));
    }
    let ybar = imputed_response_means(ds);
    if st.mu_y_free {
        for r in 0..d {
            st.mu_y[r] = ybar.row(r).mean();
        }
    }
    for r in 0..s {
        if st.mu_z_free[r] {
            st.mu_z[r] = st.z.row(r).mean();
        }
    }
    let mut stacked = DMatrix::zeros(d + s, n);
    for c in 0..n {
        for r in 0..d {
            stacked[(r, c)] = ybar[(r, c)] - st.mu_y[r];
        }
        for r in 0..s {
            stacked[(d + r, c)] = st.z[(r, c)] - st.mu_z[r];
        }
    }
    let (omega, eta) = leading_factors(&stacked, k);
    st.lambda = omega.rows(0, d).into_owned();
    st.theta = omega.rows(d, s).into_owned();
    st.eta = eta;
    let mut resid = DMatrix::zeros(s, n);
    for c in 0..n {
        for r in 0..s {
            resid[(r, c)] = stacked[(d + r, c)];
        }
    }
    resid -= &st.theta * &st.eta;
    let (xi, nu) = leading_factors(&resid, j);
    st.xi = xi;
    st.nu = nu;
    let leftover = &resid - &st.xi * &st.nu;
    for r in 0..s {
        if st.sigma_x_fixed[r] {
            continue;
        }
        let ss: f64 = leftover.row(r).iter().map(|v| v * v).sum();
        st.sigma_x2[r] = (ss / n as f64).max(1e-3);
    }
    let mut rss = 0.0;
    let mut cnt = 0.0;
    for (i, list) in ds.obs.iter().enumerate() {
        for o in list {
            let mut m = st.mu_y[o.dose_index];
            for h in 0..k {
                m += st.lambda[(o.dose_index, h)] * st.eta[(h, i)];
            }
            rss += (o.response - m) * (o.response - m);
            cnt += 1.0;
        }
    }
    st.sigma_y2 = if cnt > 0.0 { (rss / cnt).max(1e-3) } else { 1.0 };
    // Scale-aware starting point for the GP precision.
    let lam_ss = st.lambda.norm_squared();
    if lam_ss > 0.0 {
        st.phi = ((d * k) as f64 / lam_ss).clamp(1e-3, 1e3);
    }
    Ok(())
}

/// Log of the joint prior density of every parameter in `state`.
///
/// Variances with inverse-gamma priors (`β²`, `γ²`, `t`, `b`, `σ²`) enter
/// through their inverse-gamma densities; `ℓ` carries the uniform mass
/// `1/|grid|`. The latent `Z` belongs to the likelihood and is excluded.
pub fn log_prior(state: &ModelState, hp: &Hyperparams) -> Result<f64> {
    let hp = hp.resolved(&state.doses);
    state.check().map_err(|_| Error::config("state violates positivity constraints"))?;
    let ell_pos = hp.ell_grid.iter().position(|&l| l == state.ell);
    if ell_pos.is_none() {
        return Err(Error::config(alloc::format!("length-scale {} not in grid", state.ell)));
    }
    let (d, k) = state.lambda.shape();
    let s = state.theta.nrows();
    let j = state.xi.ncols();
    let mut lp = -libm::log(hp.ell_grid.len() as f64);

    lp += state.eta.iter().chain(state.nu.iter()).map(|&v| ln_normal(v, 0.0, 1.0)).sum::<f64>();

    // GP columns of Λ
    let corr = jittered_correlation(state.ell, &state.doses);
    let chol = corr.clone().cholesky().ok_or(Error::NotPositiveDefinite("gp kernel"))?;
    let log_det_r = 2.0 * chol.l().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
    for c in 0..k {
        let prec = state.phi * state.tau[c];
        let col: DVector<f64> = state.lambda.column(c).into_owned();
        let q = col.dot(&chol.solve(&col));
        lp += -(d as f64) * LN_SQRT_2PI + 0.5 * d as f64 * libm::log(prec) - 0.5 * log_det_r - 0.5 * prec * q;
    }
    lp += ln_gamma_pdf(state.phi, hp.g_phi / 2.0, hp.g_phi / 2.0);
    for (h, &dl) in state.delta.iter().enumerate() {
        lp += ln_gamma_pdf(dl, if h == 0 { hp.a1 } else { hp.a2 }, 1.0);
    }

    // Horseshoe on Θ
    for r in 0..s {
        for c in 0..k {
            let var = state.beta2 * state.gamma2[(r, c)] / state.tau[c];
            lp += ln_normal(state.theta[(r, c)], 0.0, var);
            lp += ln_inv_gamma_pdf(state.gamma2[(r, c)], 0.5, 1.0 / state.b[(r, c)]);
            lp += ln_inv_gamma_pdf(state.b[(r, c)], 0.5, 1.0);
        }
    }
    lp += ln_inv_gamma_pdf(state.beta2, 0.5, 1.0 / state.t);
    lp += ln_inv_gamma_pdf(state.t, 0.5, 1.0);

    // MGP on Ξ
    for r in 0..s {
        for c in 0..j {
            lp += ln_normal(state.xi[(r, c)], 0.0, 1.0 / (state.kappa[(r, c)] * state.omega[c]));
            lp += ln_gamma_pdf(state.kappa[(r, c)], hp.g_kappa / 2.0, hp.g_kappa / 2.0);
        }
    }
    for (h, &z) in state.zeta.iter().enumerate() {
        lp += ln_gamma_pdf(z, if h == 0 { hp.m1 } else { hp.m2 }, 1.0);
    }

    // Noise variances: 1/σ² ~ Ga(a/2, b/2)
    lp += ln_inv_gamma_pdf(state.sigma_y2, hp.a_sig_y / 2.0, hp.b_sig_y / 2.0);
    for (r, &v) in state.sigma_x2.iter().enumerate() {
        if !state.sigma_x_fixed[r] {
            lp += ln_inv_gamma_pdf(v, hp.a_sig_x / 2.0, hp.b_sig_x / 2.0);
        }
    }

    // Means
    for r in 0..s {
        if state.mu_z_free[r] {
            lp += ln_normal(state.mu_z[r], 0.0, 1.0 / state.mu_z_prec[r]);
            lp += ln_gamma_pdf(state.mu_z_prec[r], 0.5, 0.5);
        }
    }
    if state.mu_y_free {
        let my = DVector::from_column_slice(&state.mu_y);
        let q = my.dot(&chol.solve(&my));
        lp += -(d as f64) * LN_SQRT_2PI - 0.5 * log_det_r - 0.5 * q;
    }
    if !lp.is_finite() {
        return Err(Error::numerical("log_prior", "non-finite prior density"));
    }
    Ok(lp)
}

/// Replace every parameter of `template` by a draw from the joint prior.
/// Shapes, pinned means and fixed variances are taken from the template; the
/// latent `Z` is left untouched (it belongs to the likelihood).
pub fn sample_prior<R: Rng + ?Sized>(template: &ModelState, hp: &Hyperparams, rng: &mut R) -> Result<ModelState> {
    let hp = hp.resolved(&template.doses);
    hp.validate()?;
    let mut st = template.clone();
    let (d, k) = st.lambda.shape();
    let (s, j) = st.xi.shape();
    let n = st.eta.ncols();

    st.ell_index = rng.random_range(0..hp.ell_grid.len());
    st.ell = hp.ell_grid[st.ell_index];
    let l = jittered_correlation(st.ell, &st.doses)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("gp kernel"))?
        .l();
    st.phi = gamma(rng, hp.g_phi / 2.0, hp.g_phi / 2.0);
    for h in 0..k {
        st.delta[h] = gamma(rng, if h == 0 { hp.a1 } else { hp.a2 }, 1.0);
    }
    for h in 0..j {
        st.zeta[h] = gamma(rng, if h == 0 { hp.m1 } else { hp.m2 }, 1.0);
    }
    st.refresh_products();
    for c in 0..k {
        let z = DVector::from_fn(d, |_, _| std_normal(rng));
        let col = &l * z / libm::sqrt(st.phi * st.tau[c]);
        st.lambda.set_column(c, &col);
    }

    st.t = inv_gamma(rng, 0.5, 1.0);
    st.beta2 = inv_gamma(rng, 0.5, 1.0 / st.t);
    for r in 0..s {
        for c in 0..k {
            st.b[(r, c)] = inv_gamma(rng, 0.5, 1.0);
            st.gamma2[(r, c)] = inv_gamma(rng, 0.5, 1.0 / st.b[(r, c)]);
            let sd = libm::sqrt(st.beta2 * st.gamma2[(r, c)] / st.tau[c]);
            st.theta[(r, c)] = sd * std_normal(rng);
        }
        for c in 0..j {
            st.kappa[(r, c)] = gamma(rng, hp.g_kappa / 2.0, hp.g_kappa / 2.0);
            st.xi[(r, c)] = std_normal(rng) / libm::sqrt(st.kappa[(r, c)] * st.omega[c]);
        }
    }
    st.eta = DMatrix::from_fn(k, n, |_, _| std_normal(rng));
    st.nu = DMatrix::from_fn(j, n, |_, _| std_normal(rng));

    st.sigma_y2 = inv_gamma(rng, hp.a_sig_y / 2.0, hp.b_sig_y / 2.0);
    for r in 0..s {
        if !st.sigma_x_fixed[r] {
            st.sigma_x2[r] = inv_gamma(rng, hp.a_sig_x / 2.0, hp.b_sig_x / 2.0);
        }
        if st.mu_z_free[r] {
            st.mu_z_prec[r] = gamma(rng, 0.5, 0.5);
            st.mu_z[r] = std_normal(rng) / libm::sqrt(st.mu_z_prec[r]);
        }
    }
    if st.mu_y_free {
        let z = DVector::from_fn(d, |_, _| std_normal(rng));
        st.mu_y.copy_from_slice((&l * z).as_slice());
    }
    st.check()?;
    Ok(st)
}
