//! Random draws for each sampler step, applied in place to a chain state.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::conditionals::*;
use crate::kernel::KernelCache;
use crate::linalg::{cholesky_jittered, draw_with_factor, gaussian_from_precision};
use crate::model::{Hyperparams, ModelState};
use crate::random::{gamma, open_unit, std_normal, truncated_normal, ChainRng};
use crate::{Error, Result};

/// One chain's sampler: resolved hyperparameters, data statistics and the
/// length-scale factorization cache.
pub struct Sampler {
    pub hp: Hyperparams,
    pub data: ChainData,
    pub cache: KernelCache,
}

fn draw_gamma<R: Rng + ?Sized>(rng: &mut R, g: GammaParams) -> f64 {
    gamma(rng, g.shape, g.rate)
}

fn std_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| std_normal(rng))
}

fn ensure_finite<'a>(step: &'static str, mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::numerical(step, "non-finite value after update"));
    }
    Ok(())
}

impl Sampler {
    pub fn new(data: ChainData, hp: &Hyperparams, doses: &[f64]) -> Result<Self> {
        hp.validate()?;
        let hp = hp.resolved(doses);
        let cache = KernelCache::new(doses, &hp.ell_grid)?;
        Ok(Self { hp, data, cache })
    }

    /// One full sweep in the fixed order Λ (+ hypers), Z, (ν, Ξ), Θ, η,
    /// variances, means.
    pub fn sweep(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        self.step1_lambda(st, rng)?;
        self.step1_hypers(st, rng)?;
        self.step2_latent_z(st, rng)?;
        self.step3_nu_xi(st, rng)?;
        self.step4_theta(st, rng)?;
        self.step5_eta(st, rng)?;
        self.step6_variances(st, rng)?;
        self.step_means(st, rng)?;
        Ok(())
    }

    pub fn step1_lambda(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        let factor = self.cache.get(st.ell_index);
        for k in 0..st.lambda.ncols() {
            let (p, b) = lambda_column_stats(k, st, &self.data);
            let post = GpPosterior::new(lambda_prior_cov(k, st, factor), &p, &b)?;
            let sd = libm::sqrt(1.0 / (st.phi * st.tau[k]));
            let f = draw_with_factor(rng, &factor.chol_l) * sd;
            let e = std_normal_vec(rng, p.len());
            let col = post.draw_from(&f, &e, &b);
            st.lambda.set_column(k, &col);
        }
        ensure_finite("step1_lambda", st.lambda.iter())
    }

    pub fn step1_hypers(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        let probs = ell_posterior(st, &self.cache)?;
        let u = open_unit(rng);
        let mut acc = 0.0;
        let mut idx = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                idx = i;
                break;
            }
        }
        st.ell_index = idx;
        st.ell = self.cache.get(idx).ell;
        let factor = self.cache.get(idx);

        st.phi = draw_gamma(rng, phi_conditional(st, &self.hp, factor));
        let terms = delta_column_terms(st, factor);
        for h in 0..st.delta.len() {
            st.delta[h] = draw_gamma(rng, delta_conditional(h, st, &self.hp, &terms));
        }
        st.refresh_products();
        ensure_finite("step1_hypers", st.delta.iter().chain(&st.tau).chain(core::iter::once(&st.phi)))
    }

    pub fn step2_latent_z(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        if self.data.kinds.iter().all(|k| k.is_continuous()) {
            return Ok(());
        }
        let e = feature_mean(st);
        for (s, kind) in self.data.kinds.iter().enumerate() {
            if kind.is_continuous() {
                continue;
            }
            let sd = libm::sqrt(st.sigma_x2[s]);
            for i in 0..self.data.n_items {
                let (lo, hi) = latent_bounds(*kind, self.data.x[(s, i)]).expect("non-continuous kind");
                st.z[(s, i)] = truncated_normal(rng, e[(s, i)], sd, lo, hi);
            }
        }
        ensure_finite("step2_latent_z", st.z.iter())
    }

    pub fn step3_nu_xi(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        let j = st.xi.ncols();
        if j == 0 {
            return Ok(());
        }
        let resid = residual_without_theta(st);
        let prec = nu_precision(st);
        let chol = cholesky_jittered(&prec, 1e-12, "step3_nu")?;
        let lt = chol.l().transpose();
        let h = nu_linear(st, &resid);
        for i in 0..self.data.n_items {
            let mean = chol.solve(&h.column(i).into_owned());
            let z = std_normal_vec(rng, j);
            let x = lt.solve_upper_triangular(&z).ok_or(Error::NotPositiveDefinite("step3_nu"))?;
            st.nu.set_column(i, &(mean + x));
        }
        ensure_finite("step3_nu", st.nu.iter())?;

        for s in 0..st.xi.nrows() {
            let (prec, h) = xi_row_system(s, st, &resid);
            let (_, row) = gaussian_from_precision(rng, &prec, &h, "step3_xi")?;
            st.xi.set_row(s, &row.transpose());
        }
        ensure_finite("step3_xi", st.xi.iter())?;

        for s in 0..st.xi.nrows() {
            for c in 0..j {
                st.kappa[(s, c)] = draw_gamma(rng, kappa_conditional(s, c, st, &self.hp));
            }
        }
        for h in 0..j {
            st.zeta[h] = draw_gamma(rng, zeta_conditional(h, st, &self.hp));
            st.refresh_products();
        }
        ensure_finite("step3_shrinkage", st.kappa.iter().chain(&st.zeta).chain(&st.omega))
    }

    pub fn step4_theta(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        let resid = residual_without_xi(st);
        for s in 0..st.theta.nrows() {
            let (prec, h) = theta_row_system(s, st, &resid);
            let (_, row) = gaussian_from_precision(rng, &prec, &h, "step4_theta")?;
            st.theta.set_row(s, &row.transpose());
        }
        ensure_finite("step4_theta", st.theta.iter())?;

        st.beta2 = 1.0 / draw_gamma(rng, beta_precision_conditional(st));
        for s in 0..st.theta.nrows() {
            for k in 0..st.theta.ncols() {
                st.gamma2[(s, k)] = 1.0 / draw_gamma(rng, gamma_precision_conditional(s, k, st));
            }
        }
        st.t = 1.0 / draw_gamma(rng, t_precision_conditional(st));
        for s in 0..st.theta.nrows() {
            for k in 0..st.theta.ncols() {
                st.b[(s, k)] = 1.0 / draw_gamma(rng, b_precision_conditional(s, k, st));
            }
        }
        let scalars = [st.beta2, st.t];
        ensure_finite("step4_shrinkage", st.gamma2.iter().chain(st.b.iter()).chain(scalars.iter()))
    }

    pub fn step5_eta(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        let resid = residual_without_xi(st);
        let fp = eta_feature_precision(st);
        for i in 0..self.data.n_items {
            let (prec, h) = eta_system(i, st, &self.data, &fp, &resid);
            let (_, col) = gaussian_from_precision(rng, &prec, &h, "step5_eta")?;
            st.eta.set_column(i, &col);
        }
        ensure_finite("step5_eta", st.eta.iter())
    }

    pub fn step6_variances(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        st.sigma_y2 = 1.0 / draw_gamma(rng, sigma_y_precision_conditional(st, &self.hp, &self.data));
        for (s, g) in sigma_x_precision_conditionals(st, &self.hp).into_iter().enumerate() {
            if let Some(g) = g {
                st.sigma_x2[s] = 1.0 / draw_gamma(rng, g);
            }
        }
        let sy = [st.sigma_y2];
        ensure_finite("step6_variances", st.sigma_x2.iter().chain(sy.iter()))
    }

    pub fn step_means(&self, st: &mut ModelState, rng: &mut ChainRng) -> Result<()> {
        for s in 0..st.mu_z.len() {
            if !st.mu_z_free[s] {
                continue;
            }
            let (m, v) = mu_z_conditional(s, st);
            st.mu_z[s] = m + libm::sqrt(v) * std_normal(rng);
            st.mu_z_prec[s] = draw_gamma(rng, mu_z_precision_conditional(s, st));
        }
        if st.mu_y_free {
            let factor = self.cache.get(st.ell_index);
            let (p, b) = mu_y_stats(st, &self.data);
            let post = GpPosterior::new(factor.corr.clone(), &p, &b)?;
            let f = draw_with_factor(rng, &factor.chol_l);
            let e = std_normal_vec(rng, p.len());
            let m = post.draw_from(&f, &e, &b);
            st.mu_y.copy_from_slice(m.as_slice());
        }
        ensure_finite("step_means", st.mu_z.iter().chain(&st.mu_y).chain(&st.mu_z_prec))
    }

    /// Replace the data by a fresh draw from the likelihood at `st`: the
    /// latent `Z` is redrawn in full, `X` is read off `Z` by kind and each
    /// training replicate of `Y` is redrawn at its dose. Used by
    /// joint-distribution (getting-it-right) checks.
    pub fn resample_data(&mut self, st: &mut ModelState, rng: &mut ChainRng) {
        let e = feature_mean(st);
        for s in 0..st.z.nrows() {
            let sd = libm::sqrt(st.sigma_x2[s]);
            for i in 0..st.z.ncols() {
                let z = e[(s, i)] + sd * std_normal(rng);
                st.z[(s, i)] = z;
                self.data.x[(s, i)] = match self.data.kinds[s] {
                    crate::data::FeatureKind::Binary => f64::from(u8::from(z > 0.0)),
                    crate::data::FeatureKind::Count => {
                        if z > 0.0 {
                            libm::floor(z) + 1.0
                        } else {
                            0.0
                        }
                    }
                    _ => z,
                };
            }
        }
        let fit = &st.lambda * &st.eta;
        let sd = libm::sqrt(st.sigma_y2);
        self.data.ysum = DMatrix::zeros(self.data.n_doses, self.data.n_items);
        for (i, list) in self.data.obs.iter_mut().enumerate() {
            for ob in list.iter_mut() {
                ob.response = st.mu_y[ob.dose_index] + fit[(ob.dose_index, i)] + sd * std_normal(rng);
                self.data.ysum[(ob.dose_index, i)] += ob.response;
            }
        }
    }
}
