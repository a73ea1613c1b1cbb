//! Blocked Gibbs sampler.
//!
//! [`conditionals`] holds the deterministic full-conditional parameters,
//! [`steps`] the draws. [`run_chain`] drives one chain and records thinned
//! draws of everything downstream summaries need.

pub mod conditionals;
pub mod joint;
pub mod steps;

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use conditionals::{ChainData, ConditionalGaussian, GammaParams};
pub use steps::Sampler;

use crate::data::Dataset;
use crate::model::{init_state, Hyperparams, InitMode, ModelState};
use crate::random::{chain_rng, derive_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_chains: usize,
    pub init: InitMode,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_iter: 4000, burn_in: 2000, thin: 10, seed: 1, n_chains: 2, init: InitMode::Svd }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(Error::config(alloc::format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in,
                self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.n_chains == 0 {
            return Err(Error::config("at least one chain is required"));
        }
        Ok(())
    }

    /// Saved draws per chain.
    pub fn n_saved(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    fn keep(&self, iter: usize) -> bool {
        iter > self.burn_in && (iter - self.burn_in) % self.thin == 0
    }
}

/// One saved state projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    pub iter: usize,
    pub lambda: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub tau: Vec<f64>,
    pub omega: Vec<f64>,
    pub phi: f64,
    pub ell: f64,
    pub beta2: f64,
    pub sigma_y2: f64,
    pub sigma_x2: Vec<f64>,
    pub mu_y: Vec<f64>,
    pub mu_z: Vec<f64>,
    /// Orthogonal `R` applied by alignment: stored loadings are `Λ R`,
    /// stored scores `Rᵀ η`. Identity for raw draws.
    pub rotation: DMatrix<f64>,
}

impl Draw {
    pub fn from_state(st: &ModelState, chain: usize, iter: usize) -> Self {
        let k = st.lambda.ncols();
        Self {
            chain,
            iter,
            lambda: st.lambda.clone(),
            theta: st.theta.clone(),
            xi: st.xi.clone(),
            eta: st.eta.clone(),
            tau: st.tau.clone(),
            omega: st.omega.clone(),
            phi: st.phi,
            ell: st.ell,
            beta2: st.beta2,
            sigma_y2: st.sigma_y2,
            sigma_x2: st.sigma_x2.clone(),
            mu_y: st.mu_y.clone(),
            mu_z: st.mu_z.clone(),
            rotation: DMatrix::identity(k, k),
        }
    }

    /// Scores in the sampler's original factor basis (`R η'`).
    pub fn eta_original(&self) -> DMatrix<f64> {
        &self.rotation * &self.eta
    }

    /// Mean curve `μ^y + Λ η_i` on the model (rescaled) response scale.
    pub fn curve(&self, item: usize) -> Vec<f64> {
        let c = &self.lambda * self.eta.column(item);
        c.iter().zip(&self.mu_y).map(|(a, b)| a + b).collect()
    }
}

/// Scalar diagnostics recorded at every saved iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub chain: usize,
    pub iter: usize,
    pub log_lik: f64,
    pub sigma_y2: f64,
    pub phi: f64,
    pub ell: f64,
    pub beta2: f64,
    pub min_inv_tau: f64,
    pub min_inv_omega: f64,
}

/// Saved draws of one or more chains together with the dataset context
/// needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub items: Vec<String>,
    pub holdout: Vec<bool>,
    pub doses: Vec<f64>,
    pub feature_ids: Vec<String>,
    pub y_scale: f64,
    pub draws: Vec<Draw>,
    pub traces: Vec<TraceRow>,
}

impl PosteriorDraws {
    pub fn empty(ds: &Dataset) -> Self {
        Self {
            items: ds.items.clone(),
            holdout: ds.holdout.clone(),
            doses: ds.doses.clone(),
            feature_ids: ds.feature_ids.clone(),
            y_scale: ds.y_scale,
            draws: Vec::new(),
            traces: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn n_factors(&self) -> usize {
        self.draws.first().map_or(0, |d| d.lambda.ncols())
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|x| x == id)
    }

    /// Concatenate chains run on the same dataset.
    pub fn merge(parts: Vec<PosteriorDraws>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let mut out = iter.next().ok_or_else(|| Error::config("no chains to merge"))?;
        for p in iter {
            if p.items != out.items || p.doses != out.doses {
                return Err(Error::data("cannot merge draws from different datasets"));
            }
            out.draws.extend(p.draws);
            out.traces.extend(p.traces);
        }
        Ok(out)
    }
}

fn min_inverse(v: &[f64]) -> f64 {
    v.iter().map(|x| 1.0 / x).fold(f64::INFINITY, f64::min)
}

/// Run chain number `chain` of `cc` on `ds`.
///
/// The chain's random stream and its initial state are derived from
/// `cc.seed` and `chain`, so chains are independent and every run is
/// reproducible.
pub fn run_chain(ds: &Dataset, hp: &Hyperparams, cc: &ChainConfig, chain: usize) -> Result<PosteriorDraws> {
    cc.validate()?;
    ds.validate()?;
    let sampler = Sampler::new(ChainData::new(ds), hp, &ds.doses)?;
    let mut st = init_state(ds, &sampler.hp, cc.init, derive_seed(cc.seed, chain as u64))?;
    let mut rng = chain_rng(cc.seed, chain as u64);
    let mut out = PosteriorDraws::empty(ds);
    for iter in 1..=cc.n_iter {
        sampler.sweep(&mut st, &mut rng)?;
        if cc.keep(iter) {
            out.draws.push(Draw::from_state(&st, chain, iter));
            out.traces.push(TraceRow {
                chain,
                iter,
                log_lik: conditionals::log_likelihood(&st, &sampler.data),
                sigma_y2: st.sigma_y2,
                phi: st.phi,
                ell: st.ell,
                beta2: st.beta2,
                min_inv_tau: min_inverse(&st.tau),
                min_inv_omega: min_inverse(&st.omega),
            });
        }
    }
    Ok(out)
}

/// All chains of `cc`, one after another.
pub fn run_chains(ds: &Dataset, hp: &Hyperparams, cc: &ChainConfig) -> Result<PosteriorDraws> {
    let parts = (0..cc.n_chains).map(|c| run_chain(ds, hp, cc, c)).collect::<Result<Vec<_>>>()?;
    PosteriorDraws::merge(parts)
}
