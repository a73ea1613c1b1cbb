//! Synthetic data generators and scoring of fitted models against truth.
//!
//! Two families: `aligned` data drawn from a partially shared factor model
//! (GP-smooth orthonormal `Λ`, sparse orthonormal `Θ`), and `polynomial`
//! data where curves are polynomials in dose with feature coefficients. A
//! third generator produces a mixed-type, irregularly dosed fixture shaped
//! like a high-throughput screening panel.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

// Unused whenever std is linked into the build (its inherent float methods win).
#[allow(unused_imports)]
use num_traits::Float;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{rescale_response, Dataset, FeatureKind, ResponseRecord};
use crate::distance::{pairwise_distance, WeightMode};
use crate::fit::{fit, ChainRunner, FitOptions, FitOutput};
use crate::gibbs::ChainConfig;
use crate::kernel::jittered_correlation;
use crate::linalg::orthonormalize_columns;
use crate::math::{mean, pearson, quantile};
use crate::model::Hyperparams;
use crate::posterior::{mean_outer_products, CurveSummary};
use crate::random::{chain_rng, derive_seed, std_normal, ChainRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimFamily {
    Aligned,
    Polynomial,
}

impl SimFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "aligned" => Ok(Self::Aligned),
            "polynomial" => Ok(Self::Polynomial),
            other => Err(Error::config(alloc::format!("unknown simulation family {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Aligned => "aligned",
            Self::Polynomial => "polynomial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub family: SimFamily,
    pub n: usize,
    pub d: usize,
    pub s: usize,
    pub k_true: usize,
    pub j_true: usize,
    pub sigma_y: f64,
    pub sigma_x: f64,
    pub inactive_frac: f64,
    pub holdout_frac: f64,
    pub s_relevant: usize,
    pub s_irrelevant: usize,
    /// Geometric decay of GP amplitudes across the columns of `Λ` before
    /// orthonormalization.
    pub alpha_decay: f64,
    /// Support probability of each loading in `Θ` and `Ξ`.
    pub sparsity: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            family: SimFamily::Aligned,
            n: 300,
            d: 10,
            s: 40,
            k_true: 3,
            j_true: 5,
            sigma_y: 0.2,
            sigma_x: 0.1,
            inactive_frac: 0.5,
            holdout_frac: 0.25,
            s_relevant: 1,
            s_irrelevant: 10,
            alpha_decay: 0.5,
            sparsity: 0.3,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("inactive_frac", self.inactive_frac), ("holdout_frac", self.holdout_frac), ("sparsity", self.sparsity)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(alloc::format!("{name} must lie in [0, 1]")));
            }
        }
        if self.n < 2 || self.d < 1 {
            return Err(Error::config("need at least two items and one dose"));
        }
        match self.family {
            SimFamily::Aligned => {
                if self.k_true == 0 {
                    return Err(Error::config("K_true must be at least 1"));
                }
                if self.k_true > self.d {
                    return Err(Error::config(alloc::format!("K_true ({}) exceeds D ({})", self.k_true, self.d)));
                }
                if self.s < self.k_true.max(self.j_true) {
                    return Err(Error::config("S must be at least max(K_true, J_true)"));
                }
            }
            SimFamily::Polynomial => {
                if self.s_relevant == 0 {
                    return Err(Error::config("S_relevant must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Number of features the generator emits.
    pub fn n_features(&self) -> usize {
        match self.family {
            SimFamily::Aligned => self.s,
            SimFamily::Polynomial => self.s_relevant + self.s_irrelevant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    /// `D x K` (empty for the polynomial family).
    pub lambda: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub active: Vec<bool>,
    /// `D x N` noiseless curves in original units.
    pub mean_curves: DMatrix<f64>,
    /// `N x N` true distances (on `η`, or on the relevant features).
    pub distances: DMatrix<f64>,
    pub sigma_y2: f64,
    pub sigma_x2: f64,
}

pub fn regular_doses(d: usize) -> Vec<f64> {
    (1..=d).map(|i| i as f64 / d as f64).collect()
}

fn item_ids(n: usize) -> Vec<String> {
    let w = alloc::format!("{}", n.saturating_sub(1)).len();
    (0..n).map(|i| alloc::format!("item{i:0w$}")).collect()
}

fn holdout_ids(ids: &[String], frac: f64, rng: &mut ChainRng) -> Vec<String> {
    let n_hold = libm::round(frac * ids.len() as f64) as usize;
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.shuffle(rng);
    let mut picked: Vec<usize> = idx.into_iter().take(n_hold).collect();
    picked.sort_unstable();
    picked.into_iter().map(|i| ids[i].clone()).collect()
}

fn euclidean_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    DMatrix::from_fn(n, n, |a, b| (m.column(a) - m.column(b)).norm())
}

/// Sparse loadings with disjoint column supports: each row joins at most one
/// column, each column gets at least two rows when `s` allows; entries are
/// standard normal and columns are scaled to unit norm (so columns are
/// orthonormal).
pub fn sparse_orthonormal(s: usize, k: usize, p: f64, rng: &mut ChainRng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(s, k);
    if k == 0 {
        return m;
    }
    let mut rows: Vec<usize> = (0..s).collect();
    rows.shuffle(rng);
    let mut owner: Vec<Option<usize>> = alloc::vec![None; s];
    let min_rows = if s >= 2 * k { 2 } else { 1 };
    let mut it = rows.iter();
    for c in 0..k {
        for _ in 0..min_rows {
            if let Some(&r) = it.next() {
                owner[r] = Some(c);
            }
        }
    }
    for &r in it {
        for c in 0..k {
            if rng.random::<f64>() < p {
                owner[r] = Some(c);
                break;
            }
        }
    }
    for r in 0..s {
        if let Some(c) = owner[r] {
            m[(r, c)] = std_normal(rng);
        }
    }
    for c in 0..k {
        let n = m.column(c).norm();
        if n > 0.0 {
            m.column_mut(c).scale_mut(1.0 / n);
        }
    }
    m
}

/// GP-smooth loadings on `doses`: column `k` is drawn with amplitude
/// `decay^k` at a length-scale of a quarter of the dose range, then the
/// columns are orthonormalized.
pub fn smooth_orthonormal(doses: &[f64], k: usize, decay: f64, rng: &mut ChainRng) -> DMatrix<f64> {
    let d = doses.len();
    let range = doses[d - 1] - doses[0];
    let ell = if range > 0.0 { 0.25 * range } else { 1.0 };
    let chol = jittered_correlation(ell, doses).cholesky().expect("jittered kernel is positive definite").l();
    let mut m = DMatrix::zeros(d, k);
    for c in 0..k {
        let amp = libm::pow(decay, c as f64);
        let z = nalgebra::DVector::from_fn(d, |_, _| std_normal(rng));
        m.set_column(c, &(&chol * z * amp));
    }
    orthonormalize_columns(&m)
}

/// Aligned-family generator.
pub fn gen_aligned(spec: &SimSpec, seed: u64) -> Result<(Dataset, SimTruth)> {
    spec.validate()?;
    if spec.family != SimFamily::Aligned {
        return Err(Error::config("gen_aligned needs the aligned family"));
    }
    let mut rng = chain_rng(seed, 0);
    let (n, d, s, k, j) = (spec.n, spec.d, spec.s, spec.k_true, spec.j_true);
    let doses = regular_doses(d);
    let lambda = smooth_orthonormal(&doses, k, spec.alpha_decay, &mut rng);
    let theta = sparse_orthonormal(s, k, spec.sparsity, &mut rng);
    let xi = sparse_orthonormal(s, j, spec.sparsity, &mut rng);
    let mut eta = DMatrix::from_fn(k, n, |_, _| std_normal(&mut rng));
    let nu = DMatrix::from_fn(j, n, |_, _| std_normal(&mut rng));
    let n_inactive = libm::round(spec.inactive_frac * n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut active = alloc::vec![true; n];
    for &i in order.iter().take(n_inactive) {
        active[i] = false;
        eta.column_mut(i).fill(0.0);
    }
    let mean_curves = &lambda * &eta;
    let mut x = &theta * &eta;
    if j > 0 {
        x += &xi * &nu;
    }
    for v in x.iter_mut() {
        *v += spec.sigma_x * std_normal(&mut rng);
    }
    let items = item_ids(n);
    let mut recs = Vec::with_capacity(n * d);
    for i in 0..n {
        for (r, &dose) in doses.iter().enumerate() {
            recs.push(ResponseRecord {
                item_id: items[i].clone(),
                dose,
                response: mean_curves[(r, i)] + spec.sigma_y * std_normal(&mut rng),
            });
        }
    }
    let hold = holdout_ids(&items, spec.holdout_frac, &mut rng);
    let feature_ids = (0..s).map(|f| alloc::format!("x{f}")).collect();
    let ds = Dataset::new(items, feature_ids, x, alloc::vec![FeatureKind::Continuous; s], &recs, &hold)?;
    let distances = euclidean_columns(&eta);
    let truth = SimTruth {
        lambda,
        theta,
        xi,
        eta,
        nu,
        active,
        mean_curves,
        distances,
        sigma_y2: spec.sigma_y * spec.sigma_y,
        sigma_x2: spec.sigma_x * spec.sigma_x,
    };
    Ok((ds, truth))
}

/// Polynomial-family generator: `y_id = Σ_{m<=S_rel} x_im d^m + noise`.
pub fn gen_polynomial(spec: &SimSpec, seed: u64) -> Result<(Dataset, SimTruth)> {
    spec.validate()?;
    if spec.family != SimFamily::Polynomial {
        return Err(Error::config("gen_polynomial needs the polynomial family"));
    }
    let mut rng = chain_rng(seed, 0);
    let (n, d) = (spec.n, spec.d);
    let s = spec.n_features();
    let doses = regular_doses(d);
    let x = DMatrix::from_fn(s, n, |_, _| std_normal(&mut rng));
    let mean_curves = polynomial_curves(&x, spec.s_relevant, &doses);
    let items = item_ids(n);
    let mut recs = Vec::with_capacity(n * d);
    for i in 0..n {
        for (r, &dose) in doses.iter().enumerate() {
            recs.push(ResponseRecord {
                item_id: items[i].clone(),
                dose,
                response: mean_curves[(r, i)] + spec.sigma_y * std_normal(&mut rng),
            });
        }
    }
    let hold = holdout_ids(&items, spec.holdout_frac, &mut rng);
    let feature_ids = (0..s).map(|f| alloc::format!("x{f}")).collect();
    let ds = Dataset::new(items, feature_ids, x.clone(), alloc::vec![FeatureKind::Continuous; s], &recs, &hold)?;
    let relevant = x.rows(0, spec.s_relevant).into_owned();
    let truth = SimTruth {
        lambda: DMatrix::zeros(0, 0),
        theta: DMatrix::zeros(0, 0),
        xi: DMatrix::zeros(0, 0),
        eta: relevant.clone(),
        nu: DMatrix::zeros(0, 0),
        active: (0..n).map(|i| mean_curves.column(i).iter().any(|v| *v != 0.0)).collect(),
        mean_curves,
        distances: euclidean_columns(&relevant),
        sigma_y2: spec.sigma_y * spec.sigma_y,
        sigma_x2: 0.0,
    };
    Ok((ds, truth))
}

/// `D x N` curves `Σ_{m=1}^{S_rel} x_{m,i} d^m`.
pub fn polynomial_curves(x: &DMatrix<f64>, s_rel: usize, doses: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(doses.len(), x.ncols(), |r, i| {
        (0..s_rel).map(|m| x[(m, i)] * libm::pow(doses[r], (m + 1) as f64)).sum()
    })
}

pub fn generate(spec: &SimSpec, seed: u64) -> Result<(Dataset, SimTruth)> {
    match spec.family {
        SimFamily::Aligned => gen_aligned(spec, seed),
        SimFamily::Polynomial => gen_polynomial(spec, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentMse {
    pub lambda_outer: Option<f64>,
    pub theta_outer: Option<f64>,
    pub sigma_y2: Option<f64>,
    pub sigma_x2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub mspe: f64,
    pub coverage: f64,
    pub dist_corr: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub fdr: f64,
    pub component_mse: ComponentMse,
    /// MSPE of the per-dose training-mean predictor.
    pub mspe_train_mean: f64,
    /// MSPE of the all-zero (inactive) predictor.
    pub mspe_zero: f64,
    /// Smallest posterior-mean `1/τ_k`.
    pub min_inv_tau: f64,
}

impl SimMetrics {
    /// `(name, value)` pairs in a fixed order, for tabular output.
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let c = &self.component_mse;
        let mut v = alloc::vec![
            ("mspe", self.mspe),
            ("coverage", self.coverage),
            ("dist_corr", self.dist_corr),
            ("tpr", self.tpr),
            ("fpr", self.fpr),
            ("fdr", self.fdr),
            ("mspe_train_mean", self.mspe_train_mean),
            ("mspe_zero", self.mspe_zero),
            ("min_inv_tau", self.min_inv_tau),
        ];
        for (name, val) in [
            ("mse_lambda_outer", c.lambda_outer),
            ("mse_theta_outer", c.theta_outer),
            ("mse_sigma_y2", c.sigma_y2),
            ("mse_sigma_x2", c.sigma_x2),
        ] {
            if let Some(x) = val {
                v.push((name, x));
            }
        }
        v
    }
}

/// `(tpr, fpr, fdr)` from predicted and true flags; empty denominators give 0.
pub fn confusion_rates(predicted: &[bool], truth: &[bool]) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(tp, tp + fn_), ratio(fp, fp + tn), ratio(fp, fp + tp))
}

/// Per-dose mean of training responses (original units); doses never
/// observed in training fall back to the overall training mean.
pub fn training_mean_curve(ds: &Dataset) -> Vec<f64> {
    let d = ds.n_doses();
    let mut sum = alloc::vec![0.0; d];
    let mut cnt = alloc::vec![0usize; d];
    for o in ds.obs.iter().flatten() {
        sum[o.dose_index] += o.response / ds.y_scale;
        cnt[o.dose_index] += 1;
    }
    let total: f64 = sum.iter().sum();
    let all: usize = cnt.iter().sum();
    let overall = if all > 0 { total / all as f64 } else { 0.0 };
    (0..d).map(|r| if cnt[r] > 0 { sum[r] / cnt[r] as f64 } else { overall }).collect()
}

fn upper_pairs(m: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    let mut v = Vec::new();
    for a in 0..idx.len() {
        for b in (a + 1)..idx.len() {
            v.push(m[(idx[a], idx[b])]);
        }
    }
    v
}

/// Score a fit of generated data against its truth. Prediction, coverage,
/// distance and classification metrics are computed over held-out items.
pub fn score(out: &FitOutput, truth: &SimTruth) -> Result<SimMetrics> {
    let ds = &out.dataset;
    let n = ds.n_items();
    if truth.mean_curves.ncols() != n || out.summaries.len() != n {
        return Err(Error::data("fit and truth disagree on the item set"));
    }
    let by_id: BTreeMap<&str, &CurveSummary> = out.summaries.iter().map(|s| (s.item_id.as_str(), s)).collect();
    let hold: Vec<usize> = (0..n).filter(|&i| ds.holdout[i]).collect();
    if hold.is_empty() {
        return Err(Error::data("no held-out items to score"));
    }
    let base = training_mean_curve(ds);
    let (mut se, mut se_base, mut se_zero, mut cells) = (0.0, 0.0, 0.0, 0usize);
    let (mut covered, mut total) = (0usize, 0usize);
    let mut predicted = Vec::with_capacity(hold.len());
    let mut truth_active = Vec::with_capacity(hold.len());
    for &i in &hold {
        let s = by_id.get(ds.items[i].as_str()).ok_or_else(|| Error::UnknownItem(ds.items[i].clone()))?;
        for r in 0..ds.n_doses() {
            let t = truth.mean_curves[(r, i)];
            se += (s.mean_curve[r] - t).powi(2);
            se_base += (base[r] - t).powi(2);
            se_zero += t * t;
            cells += 1;
        }
        for o in &ds.withheld[i] {
            let y = o.response / ds.y_scale;
            total += 1;
            if y >= s.data_band_lo[o.dose_index] && y <= s.data_band_hi[o.dose_index] {
                covered += 1;
            }
        }
        predicted.push(s.active);
        truth_active.push(truth.active[i]);
    }
    let (tpr, fpr, fdr) = confusion_rates(&predicted, &truth_active);
    let hold_ids: Vec<String> = hold.iter().map(|&i| ds.items[i].clone()).collect();
    let dm = pairwise_distance(&out.draws, WeightMode::TauWeighted, Some(&hold_ids), None)?;
    let est = upper_pairs(&dm.mean, &(0..hold.len()).collect::<Vec<_>>());
    let tru = upper_pairs(&truth.distances, &hold);
    let dist_corr = if est.len() >= 2 { pearson(&est, &tru) } else { f64::NAN };

    let c = ds.y_scale;
    let mut comp = ComponentMse::default();
    let draws = &out.draws;
    comp.sigma_y2 = Some(
        (draws.draws.iter().map(|d| d.sigma_y2).sum::<f64>() / draws.len() as f64 / (c * c) - truth.sigma_y2).powi(2),
    );
    if truth.lambda.nrows() > 0 {
        let (ll, tt) = mean_outer_products(draws);
        let ll_true = &truth.lambda * truth.lambda.transpose();
        let tt_true = &truth.theta * truth.theta.transpose();
        let mse = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).norm_squared() / (a.nrows() * a.ncols()) as f64;
        comp.lambda_outer = Some(mse(&(ll / (c * c)), &ll_true));
        comp.theta_outer = Some(mse(&tt, &tt_true));
        let sx: Vec<f64> = out.components.sigma_x2_mean.iter().map(|v| (v - truth.sigma_x2).powi(2)).collect();
        comp.sigma_x2 = Some(mean(&sx));
    }
    let min_inv_tau = out.components.inv_tau_mean.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SimMetrics {
        mspe: se / cells as f64,
        coverage: if total > 0 { covered as f64 / total as f64 } else { f64::NAN },
        dist_corr,
        tpr,
        fpr,
        fdr,
        component_mse: comp,
        mspe_train_mean: se_base / cells as f64,
        mspe_zero: se_zero / cells as f64,
        min_inv_tau,
    })
}

/// Scores of held-out items against their withheld observations (original
/// units), alongside the two straw-man predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutScores {
    pub n_obs: usize,
    pub mse: f64,
    pub mse_train_mean: f64,
    pub mse_zero: f64,
    pub coverage: f64,
}

pub fn holdout_scores(out: &FitOutput) -> Result<HoldoutScores> {
    let ds = &out.dataset;
    let base = training_mean_curve(ds);
    let by_id: BTreeMap<&str, &CurveSummary> = out.summaries.iter().map(|s| (s.item_id.as_str(), s)).collect();
    let (mut se, mut se_base, mut se_zero, mut covered, mut n) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for i in (0..ds.n_items()).filter(|&i| ds.holdout[i]) {
        let s = by_id.get(ds.items[i].as_str()).ok_or_else(|| Error::UnknownItem(ds.items[i].clone()))?;
        for o in &ds.withheld[i] {
            let y = o.response;
            let r = o.dose_index;
            se += (s.mean_curve[r] - y).powi(2);
            se_base += (base[r] - y).powi(2);
            se_zero += y * y;
            if y >= s.data_band_lo[r] && y <= s.data_band_hi[r] {
                covered += 1;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::data("no withheld observations to score"));
    }
    let nf = n as f64;
    Ok(HoldoutScores { n_obs: n, mse: se / nf, mse_train_mean: se_base / nf, mse_zero: se_zero / nf, coverage: covered as f64 / nf })
}

/// Model dimensions used when fitting generated data: the truth plus five
/// spare columns in each block.
pub fn run_hyperparams(spec: &SimSpec, base: &Hyperparams) -> Hyperparams {
    let (k, j) = match spec.family {
        SimFamily::Aligned => (spec.k_true + 5, spec.j_true + 5),
        SimFamily::Polynomial => (spec.s_relevant + 5, 5),
    };
    Hyperparams { k, j, ..base.clone() }
}

/// Generate, fit and score one replicate. Generated features are already on
/// the latent scale, so only the Frobenius response rescaling is applied.
pub fn run_cell(
    spec: &SimSpec,
    hp: &Hyperparams,
    cc: &ChainConfig,
    seed: u64,
    runner: Option<ChainRunner<'_>>,
) -> Result<(SimMetrics, FitOutput, SimTruth)> {
    let (ds, truth) = generate(spec, seed)?;
    let (scaled, _) = rescale_response(&ds)?;
    let cc = ChainConfig { seed: derive_seed(seed, 1), ..cc.clone() };
    let opts = FitOptions { raw: true, ..FitOptions::default() };
    let out = fit(&scaled, &opts, &run_hyperparams(spec, hp), &cc, runner)?;
    let m = score(&out, &truth)?;
    Ok((m, out, truth))
}

/// One metric value of one replicate of one study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub family: SimFamily,
    pub k: usize,
    pub j: usize,
    pub s_rel: usize,
    pub s_irr: usize,
    pub rep: usize,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub family: SimFamily,
    pub k: usize,
    pub j: usize,
    pub s_rel: usize,
    pub s_irr: usize,
    pub metric: String,
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub n: usize,
}

/// Seed of replicate `rep` of cell `cell` under a master seed.
pub fn cell_seed(master: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(derive_seed(master, cell as u64), rep as u64)
}

pub fn metric_rows(spec: &SimSpec, rep: usize, m: &SimMetrics) -> Vec<StudyRow> {
    m.entries()
        .into_iter()
        .map(|(name, value)| StudyRow {
            family: spec.family,
            k: spec.k_true,
            j: spec.j_true,
            s_rel: spec.s_relevant,
            s_irr: spec.s_irrelevant,
            rep,
            metric: name.to_string(),
            value,
        })
        .collect()
}

/// Mean and 2.5/97.5 percentiles per (cell, metric), skipping non-finite
/// values.
pub fn summarize_study(rows: &[StudyRow]) -> Vec<CellSummary> {
    type Key = (SimFamily, usize, usize, usize, usize, String);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.family, r.k, r.j, r.s_rel, r.s_irr, r.metric.clone())).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|((family, k, j, s_rel, s_irr, metric), vals)| {
            let finite: Vec<f64> = vals.into_iter().filter(|v| v.is_finite()).collect();
            CellSummary {
                family,
                k,
                j,
                s_rel,
                s_irr,
                metric,
                mean: mean(&finite),
                q025: quantile(&finite, 0.025),
                q975: quantile(&finite, 0.975),
                n: finite.len(),
            }
        })
        .collect()
}

/// Sequential study over `specs x reps`; failed replicates are reported
/// and skipped.
pub fn run_study(
    specs: &[SimSpec],
    reps: usize,
    hp: &Hyperparams,
    cc: &ChainConfig,
    master_seed: u64,
) -> (Vec<StudyRow>, Vec<(usize, usize, Error)>) {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (c, spec) in specs.iter().enumerate() {
        for rep in 0..reps {
            match run_cell(spec, hp, cc, cell_seed(master_seed, c, rep), None) {
                Ok((m, _, _)) => rows.extend(metric_rows(spec, rep, &m)),
                Err(e) => failures.push((c, rep, e)),
            }
        }
    }
    (rows, failures)
}

/// Settings of the screening-panel-like fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToxcastLikeSpec {
    pub n: usize,
    pub n_continuous: usize,
    pub n_log_continuous: usize,
    pub n_count: usize,
    pub n_binary: usize,
    pub k: usize,
    pub j: usize,
    pub holdout_frac: f64,
    pub active_frac: f64,
    pub noise_sd: f64,
    /// Degrees of freedom of the Student-t response noise, rescaled so its
    /// standard deviation is `noise_sd`. Must exceed 2.
    pub noise_df: f64,
    /// Unique doses below the analysis floor of -2 (log10 µM).
    pub n_low_doses: usize,
    pub n_doses: usize,
}

impl Default for ToxcastLikeSpec {
    fn default() -> Self {
        Self {
            n: 400,
            n_continuous: 50,
            n_log_continuous: 20,
            n_count: 25,
            n_binary: 25,
            k: 4,
            j: 3,
            holdout_frac: 0.2,
            active_frac: 0.35,
            noise_sd: 0.25,
            noise_df: 2.5,
            n_low_doses: 18,
            n_doses: 56,
        }
    }
}

/// Irregular log-dose grid: `n_low` values in [-3.7, -2.05] and the rest
/// in [-2, 2], jittered.
fn screening_doses(spec: &ToxcastLikeSpec, rng: &mut ChainRng) -> Vec<f64> {
    let n_hi = spec.n_doses - spec.n_low_doses;
    let mut v = Vec::with_capacity(spec.n_doses);
    for i in 0..spec.n_low_doses {
        let base = -3.7 + 1.65 * i as f64 / (spec.n_low_doses.max(2) - 1) as f64;
        v.push(base);
    }
    for i in 0..n_hi {
        let step = 4.0 / (n_hi.max(2) - 1) as f64;
        let jitter = if i == 0 || i + 1 == n_hi { 0.0 } else { 0.3 * step * (rng.random::<f64>() - 0.5) };
        v.push(-2.0 + step * i as f64 + jitter);
    }
    v.iter_mut().for_each(|x| *x = libm::round(*x * 1e4) / 1e4);
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Hill-type curve on log dose: `top / (1 + exp(-slope (x - log_ac50)))`.
fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { libm::log1p(libm::exp(x)) }
}

pub fn hill(x: f64, top: f64, log_ac50: f64, slope: f64) -> f64 {
    top / (1.0 + libm::exp(-slope * (x - log_ac50)))
}

/// Mixed-type, irregularly dosed screening fixture with replicates and
/// sparse per-item dose coverage. Returns the dataset and the true mean
/// curves evaluated at every grid dose (original units).
pub fn gen_toxcast_like(spec: &ToxcastLikeSpec, seed: u64) -> Result<(Dataset, DMatrix<f64>)> {
    if !(spec.noise_df > 2.0) {
        return Err(Error::config("noise_df must exceed 2"));
    }
    let mut rng = chain_rng(seed, 0);
    let noise = rand_distr::StudentT::new(spec.noise_df).map_err(|_| Error::config("invalid noise_df"))?;
    let noise_scale = spec.noise_sd * libm::sqrt((spec.noise_df - 2.0) / spec.noise_df);
    let n = spec.n;
    let s = spec.n_continuous + spec.n_log_continuous + spec.n_count + spec.n_binary;
    let doses = screening_doses(spec, &mut rng);
    let eta = DMatrix::from_fn(spec.k, n, |_, _| std_normal(&mut rng));
    let nu = DMatrix::from_fn(spec.j, n, |_, _| std_normal(&mut rng));
    let theta = sparse_orthonormal(s, spec.k, 0.35, &mut rng) * 3.0;
    let xi = sparse_orthonormal(s, spec.j, 0.35, &mut rng) * 1.5;
    let mut z = &theta * &eta + &xi * &nu;
    for v in z.iter_mut() {
        *v += 0.3 * std_normal(&mut rng);
    }
    // Curve parameters follow the shared factors. Potency is a smooth
    // monotone function of the first factor, so most items sit near zero.
    let shift = crate::math::norm_inv_cdf(1.0 - spec.active_frac);
    let k = spec.k;
    let mut curves = DMatrix::zeros(doses.len(), n);
    for i in 0..n {
        let top = 0.6 * softplus(2.0 * (eta[(0, i)] - shift));
        let log_ac50 = 0.3 + 0.3 * eta[(1.min(k - 1), i)];
        let slope = 2.0 + 0.3 * eta[(2.min(k - 1), i)];
        let inhib = 0.25 * eta[(3.min(k - 1), i)];
        for (r, &x) in doses.iter().enumerate() {
            curves[(r, i)] = hill(x, top, log_ac50, slope) + inhib * hill(x, 1.0, 1.2, 3.0);
        }
    }
    let mut x = DMatrix::zeros(s, n);
    let mut kinds = Vec::with_capacity(s);
    let mut feature_ids = Vec::with_capacity(s);
    for f in 0..s {
        let (kind, prefix) = if f < spec.n_continuous {
            (FeatureKind::Continuous, "desc")
        } else if f < spec.n_continuous + spec.n_log_continuous {
            (FeatureKind::LogContinuous, "size")
        } else if f < spec.n_continuous + spec.n_log_continuous + spec.n_count {
            (FeatureKind::Count, "count")
        } else {
            (FeatureKind::Binary, "flag")
        };
        kinds.push(kind);
        feature_ids.push(alloc::format!("{prefix}{f:03}"));
        let wide_count = (f - spec.n_continuous.min(f)) % 3 == 0;
        for i in 0..n {
            let v = z[(f, i)];
            x[(f, i)] = match kind {
                FeatureKind::Continuous => 5.0 + 2.0 * v,
                FeatureKind::LogContinuous => libm::exp(0.5 * v + 1.0),
                FeatureKind::Count => {
                    let scale = if wide_count { 6.0 } else { 1.0 };
                    let c = libm::floor(scale * (v + 0.5)) + 1.0;
                    if v + 0.5 > 0.0 {
                        c
                    } else {
                        0.0
                    }
                }
                FeatureKind::Binary => f64::from(u8::from(v > 0.3)),
            };
        }
    }
    let items = item_ids(n);
    let mut recs = Vec::new();
    let nd = doses.len();
    for i in 0..n {
        let n_series = if rng.random::<f64>() < 0.3 { 2 } else { 1 };
        for _ in 0..n_series {
            let len = 6 + (rng.random::<f64>() * 8.0) as usize;
            let stride = 1 + (rng.random::<f64>() * 3.0) as usize;
            let span = (len - 1) * stride + 1;
            let start = if span >= nd { 0 } else { (rng.random::<f64>() * (nd - span + 1) as f64) as usize };
            let mut r = start;
            while r < nd && r < start + span {
                recs.push(ResponseRecord {
                    item_id: items[i].clone(),
                    dose: doses[r],
                    response: curves[(r, i)] + noise_scale * rng.sample(noise),
                });
                r += stride;
            }
        }
    }
    let hold = holdout_ids(&items, spec.holdout_frac, &mut rng);
    let ds = Dataset::new(items, feature_ids, x, kinds, &recs, &hold)?;
    // Align the truth with the dataset's grid (all doses are observed by
    // some item in practice; missing ones are dropped).
    let keep: Vec<usize> = ds.doses.iter().map(|d| doses.iter().position(|x| x == d).expect("dose from grid")).collect();
    let truth = DMatrix::from_fn(keep.len(), n, |r, c| curves[(keep[r], c)]);
    Ok((ds, truth))
}
