//! Joint-distribution check of the sampler.
//!
//! Two routes to the same joint law of parameters and data: independent
//! prior draws (marginal-conditional), and a chain that alternates one Gibbs
//! sweep with a fresh data draw from the likelihood (successive-conditional).
//! Any error in a conditional shifts the second route's stationary
//! distribution away from the prior, which shows up in the means of
//! monitored functionals.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ChainData, Sampler};
use crate::data::{Dataset, FeatureKind, ResponseRecord};
use crate::math::{mean, variance};
use crate::model::{init_state, sample_prior, Hyperparams, InitMode, ModelState};
use crate::random::{chain_rng, derive_seed};
use crate::Result;

/// Monitored functionals. Unbounded heavy-tailed quantities enter through
/// logs or `atan`, so every monitor has finite variance under the prior.
pub fn monitor_names() -> Vec<&'static str> {
    alloc::vec![
        "log_sigma_y2",
        "log_sigma_x2_0",
        "log_phi",
        "log_delta_1",
        "log_zeta_1",
        "log_beta2",
        "log_t",
        "log_gamma2_00",
        "log_kappa_00",
        "ell",
        "atan_lambda2_0",
        "atan_lambda2_2",
        "lambda0_lambda2",
        "atan_theta2_0",
        "atan_xi2_0",
        "eta2_0",
        "atan_lambda_eta",
        "atan_mu_z_2",
        "atan_mu_y_0",
        "atan_z_2_0",
    ]
}

pub fn monitors(st: &ModelState) -> Vec<f64> {
    let at = libm::atan;
    let l = &st.lambda;
    let lnorm = libm::sqrt(l.column(0).norm_squared()).max(f64::MIN_POSITIVE);
    alloc::vec![
        libm::log(st.sigma_y2),
        libm::log(st.sigma_x2[0]),
        libm::log(st.phi),
        libm::log(st.delta[0]),
        libm::log(st.zeta[0]),
        libm::log(st.beta2),
        libm::log(st.t),
        libm::log(st.gamma2[(0, 0)]),
        libm::log(st.kappa[(0, 0)]),
        st.ell,
        at(l[(0, 0)] * l[(0, 0)]),
        at(l[(l.nrows() - 1, 0)] * l[(l.nrows() - 1, 0)]),
        // correlation of the first and last dose loadings: smoothness
        l[(0, 0)] * l[(l.nrows() - 1, 0)] / (lnorm * lnorm),
        at(st.theta[(0, 0)] * st.theta[(0, 0)]),
        at(st.xi[(0, 0)] * st.xi[(0, 0)]),
        st.eta[(0, 0)] * st.eta[(0, 0)],
        at(l[(0, 0)] * st.eta[(0, 0)]),
        at(st.mu_z[2]),
        at(st.mu_y[0]),
        at(st.z[(2, 0)]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorComparison {
    pub name: String,
    pub prior_mean: f64,
    pub prior_se: f64,
    pub chain_mean: f64,
    /// Batch-means standard error.
    pub chain_se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCheckReport {
    pub n_samples: usize,
    pub comparisons: Vec<MonitorComparison>,
}

impl JointCheckReport {
    pub fn max_abs_z(&self) -> f64 {
        self.comparisons.iter().map(|c| c.z.abs()).fold(0.0, f64::max)
    }
}

/// Four items, three doses, four features (two continuous, one binary, one
/// count), every item observed at every dose and one replicated cell.
pub fn joint_check_dataset() -> Dataset {
    let items: Vec<String> = (0..4).map(|i| alloc::format!("g{i}")).collect();
    let doses = [0.0, 0.5, 1.0];
    let mut recs = Vec::new();
    for id in &items {
        for &d in &doses {
            recs.push(ResponseRecord { item_id: id.clone(), dose: d, response: 0.0 });
        }
    }
    recs.push(ResponseRecord { item_id: items[0].clone(), dose: 0.5, response: 0.0 });
    let x = nalgebra::DMatrix::from_row_slice(4, 4, &[
        0.1, -0.2, 0.3, 0.0, //
        1.0, 0.5, -0.5, 0.2, //
        1.0, 0.0, 1.0, 0.0, //
        0.0, 2.0, 1.0, 3.0,
    ]);
    let kinds = alloc::vec![FeatureKind::Continuous, FeatureKind::Continuous, FeatureKind::Binary, FeatureKind::Count];
    let fids = (0..4).map(|s| alloc::format!("f{s}")).collect();
    Dataset::new(items, fids, x, kinds, &recs, &[]).expect("fixed dataset is valid")
}

/// Hyperparameters of the check: one factor in each block, every mean free.
pub fn joint_check_hyperparams() -> Hyperparams {
    Hyperparams {
        k: 1,
        j: 1,
        ell_grid_size: 5,
        a_sig_y: 6.0,
        b_sig_y: 3.0,
        a_sig_x: 6.0,
        b_sig_x: 3.0,
        center_x: false,
        center_y: false,
        ..Hyperparams::default()
    }
}

/// Run both routes with `n_chains * sweeps` draws each.
///
/// The successive-conditional route runs `n_chains` independent chains,
/// each started from an exact joint draw, so every recorded state is
/// marginally an exact joint draw when the sampler is correct. Each chain
/// is one batch of the batch-means standard error, which makes the batches
/// independent whatever the within-chain autocorrelation.
pub fn run_joint_check(n_chains: usize, sweeps: usize, seed: u64) -> Result<JointCheckReport> {
    if n_chains < 2 || sweeps == 0 {
        return Err(crate::Error::config("joint check needs at least two chains and one sweep"));
    }
    let ds = joint_check_dataset();
    let hp = joint_check_hyperparams().resolved(&ds.doses);
    let template = init_state(&ds, &hp, InitMode::RandomSmall, derive_seed(seed, 0))?;
    let m = monitor_names().len();
    let n_samples = n_chains * sweeps;
    let mut sampler = Sampler::new(ChainData::new(&ds), &hp, &ds.doses)?;

    let mut rng = chain_rng(seed, 1);
    let mut prior_vals: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(n_samples); m];
    for _ in 0..n_samples {
        let mut st = sample_prior(&template, &hp, &mut rng)?;
        sampler.resample_data(&mut st, &mut rng);
        for (v, x) in prior_vals.iter_mut().zip(monitors(&st)) {
            v.push(x);
        }
    }

    let mut batch_means: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(n_chains); m];
    for c in 0..n_chains {
        let mut rng = chain_rng(seed, 2 + c as u64);
        let mut st = sample_prior(&template, &hp, &mut rng)?;
        sampler.resample_data(&mut st, &mut rng);
        let mut sums = alloc::vec![0.0; m];
        for _ in 0..sweeps {
            sampler.sweep(&mut st, &mut rng)?;
            sampler.resample_data(&mut st, &mut rng);
            for (acc, x) in sums.iter_mut().zip(monitors(&st)) {
                *acc += x;
            }
        }
        for (b, acc) in batch_means.iter_mut().zip(sums) {
            b.push(acc / sweeps as f64);
        }
    }

    let comparisons = monitor_names()
        .into_iter()
        .zip(prior_vals.iter().zip(&batch_means))
        .map(|(name, (p, b))| {
            let prior_se = libm::sqrt(variance(p) / p.len() as f64);
            let chain_se = libm::sqrt(variance(b) / b.len() as f64);
            let (pm, cm) = (mean(p), mean(b));
            MonitorComparison {
                name: String::from(name),
                prior_mean: pm,
                prior_se,
                chain_mean: cm,
                chain_se,
                z: (cm - pm) / libm::sqrt(prior_se * prior_se + chain_se * chain_se),
            }
        })
        .collect();
    Ok(JointCheckReport { n_samples, comparisons })
}
