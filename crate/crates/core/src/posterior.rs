//! Curve predictions, simultaneous bands, activity calls, AC50 and
//! component summaries computed from aligned draws.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::unscale_response;
use crate::distance::DistanceMatrix;
use crate::gibbs::PosteriorDraws;
use crate::math::quantile_sorted;
use crate::random::{chain_rng, std_normal};
use crate::{Error, Result};

/// Truncation is adequate once the smallest posterior-mean `1/τ` (or `1/ω`)
/// drops below this.
pub const ADEQUACY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Positive,
    Negative,
    Mixed,
    None,
}

/// Simultaneous band from a set of curves: `mean ± q sd` where `q` is the
/// `(1-α)` order statistic of the per-curve max standardized deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub q: f64,
    /// Sorted per-curve statistics `max_d |c(d) - mean(d)| / sd(d)`.
    pub max_stats: Vec<f64>,
}

/// Number of curves allowed outside a level-`1-α` band out of `t`:
/// the largest `c` with `c < α t`.
fn allowed_exceedances(alpha: f64, t: usize) -> usize {
    let at = alpha * t as f64;
    let c = libm::ceil(at) as usize;
    c.saturating_sub(1).min(t.saturating_sub(1))
}

/// Band multiplier for sorted statistics at level `1-α`.
pub fn band_quantile(sorted_stats: &[f64], alpha: f64) -> f64 {
    let t = sorted_stats.len();
    if t == 0 {
        return 0.0;
    }
    sorted_stats[t - 1 - allowed_exceedances(alpha, t)]
}

fn standardized_max(curve: &[f64], mean: &[f64], sd: &[f64]) -> f64 {
    curve
        .iter()
        .zip(mean)
        .zip(sd)
        .map(|((c, m), s)| if *s > 0.0 { (c - m).abs() / s } else { 0.0 })
        .fold(0.0, f64::max)
}

pub fn simultaneous_band(curves: &[Vec<f64>], alpha: f64) -> Result<Band> {
    let t = curves.len();
    if t == 0 {
        return Err(Error::data("no draws to summarize"));
    }
    let d = curves[0].len();
    let mean: Vec<f64> = (0..d).map(|j| curves.iter().map(|c| c[j]).sum::<f64>() / t as f64).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            if t < 2 {
                return 0.0;
            }
            let ss: f64 = curves.iter().map(|c| (c[j] - mean[j]) * (c[j] - mean[j])).sum();
            let v = libm::sqrt(ss / (t - 1) as f64);
            // Rounding noise on constant draws is not spread.
            if v <= 1e-14 * mean[j].abs() {
                0.0
            } else {
                v
            }
        })
        .collect();
    let stats: Vec<f64> = curves.iter().map(|c| standardized_max(c, &mean, &sd)).collect();
    let mut max_stats = stats.clone();
    max_stats.sort_by(f64::total_cmp);
    let q = band_quantile(&max_stats, alpha);
    let mut lo: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m - q * s).collect();
    let mut hi: Vec<f64> = mean.iter().zip(&sd).map(|(m, s)| m + q * s).collect();
    // A curve with statistic exactly q can sit a rounding error outside
    // mean ± q sd; keep every curve at or below q inside.
    for (c, m) in curves.iter().zip(&stats) {
        if *m <= q {
            for j in 0..d {
                lo[j] = lo[j].min(c[j]);
                hi[j] = hi[j].max(c[j]);
            }
        }
    }
    Ok(Band { mean, sd, lo, hi, q, max_stats })
}

/// Standardized distance of the zero function from the mean curve.
fn zero_statistic(mean: &[f64], sd: &[f64]) -> f64 {
    mean.iter()
        .zip(sd)
        .map(|(m, s)| {
            if *s > 0.0 {
                m.abs() / s
            } else if *m != 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Global Bayesian p-value of a band: the fraction of draws whose max
/// standardized deviation is at least that of the zero curve. The band at
/// level `1-α` excludes zero somewhere exactly when this is below `α`.
pub fn band_p_value(band: &Band) -> f64 {
    let m0 = zero_statistic(&band.mean, &band.sd);
    let c = band.max_stats.iter().filter(|&&m| m >= m0).count();
    c as f64 / band.max_stats.len().max(1) as f64
}

/// Sign pattern of the band's exclusion of zero at level `1-α`.
pub fn band_direction(band: &Band, alpha: f64) -> Direction {
    let q = band_quantile(&band.max_stats, alpha);
    let (mut pos, mut neg) = (false, false);
    for (m, s) in band.mean.iter().zip(&band.sd) {
        if m.abs() > q * s {
            if *m > 0.0 {
                pos = true;
            } else if *m < 0.0 {
                neg = true;
            }
        }
    }
    match (pos, neg) {
        (true, false) => Direction::Positive,
        (false, true) => Direction::Negative,
        (true, true) => Direction::Mixed,
        (false, false) => Direction::None,
    }
}

/// `(p, direction)` for one item's per-draw curves; direction is read off
/// the `1-α` band.
pub fn bayes_p_value(curves: &[Vec<f64>], alpha: f64) -> Result<(f64, Direction)> {
    if curves.len() < 2 {
        return Err(Error::data("p-value needs at least two draws"));
    }
    let band = simultaneous_band(curves, alpha)?;
    Ok((band_p_value(&band), band_direction(&band, alpha)))
}

/// Dose at which `curve` first reaches half its maximum, linearly
/// interpolated; `None` when the maximum is not positive.
pub fn ac50(curve: &[f64], doses: &[f64]) -> Option<f64> {
    let m = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(m > 0.0) {
        return None;
    }
    let half = 0.5 * m;
    if curve[0] >= half {
        return Some(doses[0]);
    }
    for j in 1..curve.len() {
        if curve[j] >= half {
            let (c0, c1) = (curve[j - 1], curve[j]);
            let (d0, d1) = (doses[j - 1], doses[j]);
            return Some(d0 + (half - c0) / (c1 - c0) * (d1 - d0));
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub item_id: String,
    pub holdout: bool,
    pub doses: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub sd: Vec<f64>,
    pub mean_band_lo: Vec<f64>,
    pub mean_band_hi: Vec<f64>,
    pub data_band_lo: Vec<f64>,
    pub data_band_hi: Vec<f64>,
    pub alpha: f64,
    pub bayes_p: f64,
    pub direction: Direction,
    pub active: bool,
    /// Active with an increasing response.
    pub activating: bool,
    pub ac50_samples: Vec<f64>,
    /// Sorted per-draw max standardized deviations of the mean band, kept so
    /// bands can be recomputed at other levels.
    pub max_stats: Vec<f64>,
}

impl CurveSummary {
    /// Lower mean band at level `1-α`.
    pub fn lower_band(&self, alpha: f64) -> Vec<f64> {
        let q = band_quantile(&self.max_stats, alpha);
        self.mean_curve.iter().zip(&self.sd).map(|(m, s)| m - q * s).collect()
    }

    pub fn upper_band(&self, alpha: f64) -> Vec<f64> {
        let q = band_quantile(&self.max_stats, alpha);
        self.mean_curve.iter().zip(&self.sd).map(|(m, s)| m + q * s).collect()
    }
}

/// Per-draw mean curves for `item` in original response units.
pub fn item_curves(draws: &PosteriorDraws, item: usize) -> Vec<Vec<f64>> {
    draws
        .draws
        .iter()
        .map(|d| d.curve(item).into_iter().map(|v| unscale_response(v, draws.y_scale)).collect())
        .collect()
}

fn summarize_item(draws: &PosteriorDraws, item: usize, alpha: f64, seed: u64) -> Result<CurveSummary> {
    let curves = item_curves(draws, item);
    let band = simultaneous_band(&curves, alpha)?;
    let p = band_p_value(&band);
    let direction = band_direction(&band, alpha);
    let mut rng = chain_rng(seed, item as u64);
    let noisy: Vec<Vec<f64>> = curves
        .iter()
        .zip(&draws.draws)
        .map(|(c, d)| {
            let sd = libm::sqrt(d.sigma_y2) / draws.y_scale;
            c.iter().map(|v| v + sd * std_normal(&mut rng)).collect()
        })
        .collect();
    let data_band = simultaneous_band(&noisy, alpha)?;
    let data_lo = data_band.lo.iter().zip(&band.lo).map(|(a, b)| a.min(*b)).collect();
    let data_hi = data_band.hi.iter().zip(&band.hi).map(|(a, b)| a.max(*b)).collect();
    let ac50_samples = curves.iter().filter_map(|c| ac50(c, &draws.doses)).collect();
    let active = p < alpha;
    Ok(CurveSummary {
        item_id: draws.items[item].clone(),
        holdout: draws.holdout[item],
        doses: draws.doses.clone(),
        mean_curve: band.mean,
        sd: band.sd,
        mean_band_lo: band.lo,
        mean_band_hi: band.hi,
        data_band_lo: data_lo,
        data_band_hi: data_hi,
        alpha,
        bayes_p: p,
        direction,
        active,
        activating: active && direction == Direction::Positive,
        ac50_samples,
        max_stats: band.max_stats,
    })
}

/// Summary for a single item by id.
pub fn predict_item(draws: &PosteriorDraws, item_id: &str, alpha: f64, seed: u64) -> Result<CurveSummary> {
    let i = draws.item_index(item_id).ok_or_else(|| Error::UnknownItem(item_id.into()))?;
    if draws.is_empty() {
        return Err(Error::data("no draws"));
    }
    summarize_item(draws, i, alpha, seed)
}

/// Summaries for every item. The data band's predictive noise is drawn
/// from a stream keyed by `seed` and the item index.
pub fn predict_curves(draws: &PosteriorDraws, alpha: f64, seed: u64) -> Result<Vec<CurveSummary>> {
    if draws.is_empty() {
        return Err(Error::data("no draws"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must lie in (0, 1)"));
    }
    (0..draws.items.len()).map(|i| summarize_item(draws, i, alpha, seed)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    /// Band per column of aligned `Λ` (model scale).
    pub lambda_columns: Vec<Band>,
    /// Posterior mean of aligned `Θ`, row-major `S x K`.
    pub theta_mean: Vec<Vec<f64>>,
    pub inv_tau_mean: Vec<f64>,
    pub inv_omega_mean: Vec<f64>,
    pub alpha2_mean: Vec<f64>,
    pub k_adequate: bool,
    /// `None` when there are no feature-only factors.
    pub j_adequate: Option<bool>,
    pub sigma_y2_mean: f64,
    pub sigma_x2_mean: Vec<f64>,
    /// Component summaries depend on the alignment convention.
    pub rotation_caveat: bool,
}

fn column_means(rows: impl Iterator<Item = Vec<f64>>, n: usize) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for r in rows {
        if acc.is_empty() {
            acc = alloc::vec![0.0; r.len()];
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / n as f64).collect()
}

pub fn component_summaries(draws: &PosteriorDraws, alpha: f64) -> Result<ComponentSummary> {
    let t = draws.len();
    if t == 0 {
        return Err(Error::data("no draws"));
    }
    let k = draws.n_factors();
    let lambda_columns = (0..k)
        .map(|c| {
            let cols: Vec<Vec<f64>> = draws.draws.iter().map(|d| d.lambda.column(c).iter().copied().collect()).collect();
            simultaneous_band(&cols, alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = draws.draws[0].theta.nrows();
    let mut theta = DMatrix::zeros(s, k);
    for d in &draws.draws {
        theta += &d.theta;
    }
    theta /= t as f64;
    let theta_mean = (0..s).map(|r| theta.row(r).iter().copied().collect()).collect();
    let tau_mean = column_means(draws.draws.iter().map(|d| d.tau.clone()), t);
    let omega_mean = column_means(draws.draws.iter().map(|d| d.omega.clone()), t);
    let inv_tau_mean: Vec<f64> = tau_mean.iter().map(|v| 1.0 / v).collect();
    let inv_omega_mean: Vec<f64> = omega_mean.iter().map(|v| 1.0 / v).collect();
    let alpha2_mean = column_means(draws.draws.iter().map(|d| d.tau.iter().map(|tk| 1.0 / (d.phi * tk)).collect()), t);
    let k_adequate = inv_tau_mean.iter().any(|v| *v < ADEQUACY_THRESHOLD);
    let j_adequate = if inv_omega_mean.is_empty() {
        None
    } else {
        Some(inv_omega_mean.iter().any(|v| *v < ADEQUACY_THRESHOLD))
    };
    Ok(ComponentSummary {
        lambda_columns,
        theta_mean,
        inv_tau_mean,
        inv_omega_mean,
        alpha2_mean,
        k_adequate,
        j_adequate,
        sigma_y2_mean: draws.draws.iter().map(|d| d.sigma_y2).sum::<f64>() / t as f64,
        sigma_x2_mean: column_means(draws.draws.iter().map(|d| d.sigma_x2.clone()), t),
        rotation_caveat: true,
    })
}

/// Posterior means of `ΛΛᵀ` and `ΘΘᵀ` (rotation invariant).
pub fn mean_outer_products(draws: &PosteriorDraws) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = draws.len().max(1) as f64;
    let first = &draws.draws[0];
    let mut ll = DMatrix::zeros(first.lambda.nrows(), first.lambda.nrows());
    let mut tt = DMatrix::zeros(first.theta.nrows(), first.theta.nrows());
    for d in &draws.draws {
        ll += &d.lambda * d.lambda.transpose();
        tt += &d.theta * d.theta.transpose();
    }
    (ll / t, tt / t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityRule {
    MaxLowerBand,
    ExpectedAc50,
    MaxMean,
    NearestToActives,
}

impl PriorityRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max_lower_band" => Ok(Self::MaxLowerBand),
            "expected_ac50" => Ok(Self::ExpectedAc50),
            "max_mean" => Ok(Self::MaxMean),
            "nearest_to_actives" => Ok(Self::NearestToActives),
            other => Err(Error::config(alloc::format!("unknown priority rule {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MaxLowerBand => "max_lower_band",
            Self::ExpectedAc50 => "expected_ac50",
            Self::MaxMean => "max_mean",
            Self::NearestToActives => "nearest_to_actives",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priority {
    pub rank: usize,
    pub item_id: String,
    pub score: f64,
}

/// Items whose `1-α` lower mean band exceeds zero at some dose, ranked by
/// `rule` (best first).
///
/// `nearest_to_actives` scores a candidate by minus its smallest expected
/// distance to any other candidate, so members of tight groups of active
/// items come first; it needs `dm`.
pub fn prioritize(
    summaries: &[CurveSummary],
    alpha: f64,
    rule: PriorityRule,
    dm: Option<&DistanceMatrix>,
) -> Result<Vec<Priority>> {
    let cands: Vec<&CurveSummary> =
        summaries.iter().filter(|s| s.lower_band(alpha).iter().any(|v| *v > 0.0)).collect();
    let mut scored: Vec<(f64, &CurveSummary)> = Vec::with_capacity(cands.len());
    for c in &cands {
        let score = match rule {
            PriorityRule::MaxLowerBand => c.lower_band(alpha).iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PriorityRule::MaxMean => c.mean_curve.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PriorityRule::ExpectedAc50 => {
                if c.ac50_samples.is_empty() {
                    f64::INFINITY
                } else {
                    c.ac50_samples.iter().sum::<f64>() / c.ac50_samples.len() as f64
                }
            }
            PriorityRule::NearestToActives => {
                let dm = dm.ok_or_else(|| Error::config("nearest_to_actives needs a distance matrix"))?;
                let i = dm.index(&c.item_id).ok_or_else(|| Error::UnknownItem(c.item_id.clone()))?;
                let mut best = f64::INFINITY;
                for o in cands.iter().filter(|o| o.item_id != c.item_id) {
                    let j = dm.index(&o.item_id).ok_or_else(|| Error::UnknownItem(o.item_id.clone()))?;
                    best = best.min(dm.mean[(i, j)]);
                }
                -best
            }
        };
        scored.push((score, c));
    }
    let ascending = rule == PriorityRule::ExpectedAc50;
    scored.sort_by(|a, b| {
        let ord = if ascending { a.0.total_cmp(&b.0) } else { b.0.total_cmp(&a.0) };
        ord.then_with(|| a.1.item_id.cmp(&b.1.item_id))
    });
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(r, (score, c))| Priority { rank: r + 1, item_id: c.item_id.clone(), score })
        .collect())
}

/// Empirical fraction of curves lying inside the band at every dose.
pub fn band_coverage(band_lo: &[f64], band_hi: &[f64], curves: &[Vec<f64>]) -> f64 {
    let inside = curves
        .iter()
        .filter(|c| c.iter().zip(band_lo).zip(band_hi).all(|((v, l), h)| *v >= *l && *v <= *h))
        .count();
    inside as f64 / curves.len().max(1) as f64
}

/// Type-7 quantile of unsorted values; re-exported for summaries of
/// AC50 samples.
pub fn sample_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}
