//! TOML run configuration.
//!
//! ```toml
//! [model]
//! k = 5
//! j = 5
//! alpha = 0.05
//!
//! [mcmc]
//! n_iter = 4000
//! burn_in = 2000
//! thin = 10
//! n_chains = 2
//! seed = 1
//! init = "svd"
//!
//! [priors]
//! a1 = 2.1
//!
//! [preprocess]
//! dose_floor = -2.0
//! ```
//!
//! Every key is optional; missing keys take the library defaults.

use std::path::Path;

use dosefactor_core::data::PreprocessOptions;
use dosefactor_core::fit::FitOptions;
use dosefactor_core::gibbs::ChainConfig;
use dosefactor_core::model::Hyperparams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub k: usize,
    pub j: usize,
    /// Level of the simultaneous bands and activity calls.
    pub alpha: f64,
    pub center_x: bool,
    pub center_y: bool,
    pub ell_grid: Vec<f64>,
    pub ell_grid_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            k: hp.k,
            j: hp.j,
            alpha: FitOptions::default().alpha,
            center_x: hp.center_x,
            center_y: hp.center_y,
            ell_grid: hp.ell_grid,
            ell_grid_size: hp.ell_grid_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
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
}

impl Default for PriorSection {
    fn default() -> Self {
        let hp = Hyperparams::default();
        Self {
            a1: hp.a1,
            a2: hp.a2,
            m1: hp.m1,
            m2: hp.m2,
            g_phi: hp.g_phi,
            g_kappa: hp.g_kappa,
            a_sig_y: hp.a_sig_y,
            b_sig_y: hp.b_sig_y,
            a_sig_x: hp.a_sig_x,
            b_sig_x: hp.b_sig_x,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub mcmc: ChainConfig,
    pub priors: PriorSection,
    pub preprocess: PreprocessOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::malformed(origin, e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::InputFile { flag: "config", path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        self.mcmc.validate()?;
        if !(self.model.alpha > 0.0 && self.model.alpha < 1.0) {
            return Err(CliError::Usage(format!("model.alpha must lie in (0, 1), got {}", self.model.alpha)));
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let (m, p) = (&self.model, &self.priors);
        Hyperparams {
            k: m.k,
            j: m.j,
            a1: p.a1,
            a2: p.a2,
            m1: p.m1,
            m2: p.m2,
            g_phi: p.g_phi,
            g_kappa: p.g_kappa,
            a_sig_y: p.a_sig_y,
            b_sig_y: p.b_sig_y,
            a_sig_x: p.a_sig_x,
            b_sig_x: p.b_sig_x,
            ell_grid: m.ell_grid.clone(),
            ell_grid_size: m.ell_grid_size,
            center_y: m.center_y,
            center_x: m.center_x,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { preprocess: self.preprocess.clone(), raw: false, alpha: self.model.alpha }
    }
}
