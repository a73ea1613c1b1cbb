//! Expected latent distances between items, neighbour queries and
//! coverage-driven selection of new items.

use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::gibbs::PosteriorDraws;
use crate::math::quantile_sorted;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_k ∝ 1/τ_k`, normalized to sum one.
    TauWeighted,
    Unweighted,
}

impl WeightMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tau_weighted" => Ok(Self::TauWeighted),
            "unweighted" => Ok(Self::Unweighted),
            other => Err(Error::config(alloc::format!("unknown weight mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub items: Vec<String>,
    pub mean: DMatrix<f64>,
    /// Per-pair credible interval bounds, when requested.
    pub lo: Option<DMatrix<f64>>,
    pub hi: Option<DMatrix<f64>>,
}

impl DistanceMatrix {
    pub fn index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|x| x == id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-draw weighted scores `diag(sqrt(w)) η` in the sampler's original
/// basis, restricted to `items`.
fn weighted_scores(draws: &PosteriorDraws, items: &[usize], mode: WeightMode) -> Vec<DMatrix<f64>> {
    draws
        .draws
        .iter()
        .map(|d| {
            let eta = d.eta_original();
            let k = eta.nrows();
            let w: Vec<f64> = match mode {
                WeightMode::Unweighted => alloc::vec![1.0; k],
                WeightMode::TauWeighted => {
                    let raw: Vec<f64> = d.tau.iter().map(|t| 1.0 / t).collect();
                    let total: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / total).collect()
                }
            };
            DMatrix::from_fn(k, items.len(), |r, c| libm::sqrt(w[r]) * eta[(r, items[c])])
        })
        .collect()
}

fn column_distance(u: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for r in 0..u.nrows() {
        let d = u[(r, a)] - u[(r, b)];
        s += d * d;
    }
    libm::sqrt(s)
}

/// Expected pairwise distance between `items` (all items when `None`),
/// with optional equal-tailed credible intervals at `level`.
pub fn pairwise_distance(
    draws: &PosteriorDraws,
    mode: WeightMode,
    items: Option<&[String]>,
    level: Option<f64>,
) -> Result<DistanceMatrix> {
    if draws.is_empty() {
        return Err(Error::data("no draws"));
    }
    let idx: Vec<usize> = match items {
        None => (0..draws.items.len()).collect(),
        Some(ids) => ids
            .iter()
            .map(|id| draws.item_index(id).ok_or_else(|| Error::UnknownItem(id.clone())))
            .collect::<Result<_>>()?,
    };
    let n = idx.len();
    let t = draws.len();
    let scores = weighted_scores(draws, &idx, mode);
    let mut mean = DMatrix::zeros(n, n);
    let mut lo = level.map(|_| DMatrix::zeros(n, n));
    let mut hi = level.map(|_| DMatrix::zeros(n, n));
    let mut buf = Vec::with_capacity(t);
    for a in 0..n {
        for b in (a + 1)..n {
            buf.clear();
            buf.extend(scores.iter().map(|u| column_distance(u, a, b)));
            let m = buf.iter().sum::<f64>() / t as f64;
            mean[(a, b)] = m;
            mean[(b, a)] = m;
            if let (Some(level), Some(lo), Some(hi)) = (level, lo.as_mut(), hi.as_mut()) {
                buf.sort_by(f64::total_cmp);
                let tail = 0.5 * (1.0 - level);
                let (l, h) = (quantile_sorted(&buf, tail), quantile_sorted(&buf, 1.0 - tail));
                lo[(a, b)] = l;
                lo[(b, a)] = l;
                hi[(a, b)] = h;
                hi[(b, a)] = h;
            }
        }
    }
    Ok(DistanceMatrix { items: idx.iter().map(|&i| draws.items[i].clone()).collect(), mean, lo, hi })
}

/// Distances of a single draw (for metric checks).
pub fn draw_distances(draws: &PosteriorDraws, draw: usize, mode: WeightMode) -> DMatrix<f64> {
    let idx: Vec<usize> = (0..draws.items.len()).collect();
    let single = PosteriorDraws { draws: alloc::vec![draws.draws[draw].clone()], ..draws.clone() };
    let u = &weighted_scores(&single, &idx, mode)[0];
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| column_distance(u, a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub item_id: String,
    pub distance: f64,
}

/// The `k` nearest items to `query` (itself excluded), ties broken by id.
/// The flag reports whether `k` had to be clipped to `N - 1`.
pub fn neighbors(dm: &DistanceMatrix, query: &str, k: usize) -> Result<(Vec<Neighbor>, bool)> {
    let q = dm.index(query).ok_or_else(|| Error::UnknownItem(query.into()))?;
    let mut all: Vec<Neighbor> = (0..dm.len())
        .filter(|&j| j != q)
        .map(|j| Neighbor { item_id: dm.items[j].clone(), distance: dm.mean[(q, j)] })
        .collect();
    all.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.item_id.cmp(&b.item_id)));
    let clipped = k > all.len();
    all.truncate(k);
    Ok((all, clipped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    /// Candidates closest on average to the training set.
    FillIn,
    /// Greedy maximin: each pick is farthest from training and earlier picks.
    VentureOut,
}

impl DesignMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fill_in" => Ok(Self::FillIn),
            "venture_out" => Ok(Self::VentureOut),
            other => Err(Error::config(alloc::format!("unknown design mode {other:?}"))),
        }
    }
}

pub fn coverage_design(
    dm: &DistanceMatrix,
    train_ids: &[String],
    candidate_ids: &[String],
    n_pick: usize,
    mode: DesignMode,
) -> Result<Vec<String>> {
    if candidate_ids.is_empty() {
        return Err(Error::data("no candidates"));
    }
    let lookup = |id: &String| dm.index(id).ok_or_else(|| Error::UnknownItem(id.clone()));
    let train: Vec<usize> = train_ids.iter().map(lookup).collect::<Result<_>>()?;
    let cands: Vec<usize> = candidate_ids.iter().map(lookup).collect::<Result<_>>()?;
    if cands.iter().any(|c| train.contains(c)) {
        return Err(Error::data("training and candidate sets overlap"));
    }
    let n_pick = n_pick.min(cands.len());
    match mode {
        DesignMode::FillIn => {
            let mut scored: Vec<(f64, usize)> = cands
                .iter()
                .map(|&c| {
                    let avg = if train.is_empty() {
                        0.0
                    } else {
                        train.iter().map(|&t| dm.mean[(c, t)]).sum::<f64>() / train.len() as f64
                    };
                    (avg, c)
                })
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| dm.items[a.1].cmp(&dm.items[b.1])));
            Ok(scored.into_iter().take(n_pick).map(|(_, c)| dm.items[c].clone()).collect())
        }
        DesignMode::VentureOut => {
            let mut min_d: Vec<f64> =
                cands.iter().map(|&c| train.iter().map(|&t| dm.mean[(c, t)]).fold(f64::INFINITY, f64::min)).collect();
            let mut taken = alloc::vec![false; cands.len()];
            let mut picks = Vec::with_capacity(n_pick);
            for _ in 0..n_pick {
                let mut best: Option<usize> = None;
                for j in (0..cands.len()).filter(|&j| !taken[j]) {
                    best = match best {
                        None => Some(j),
                        Some(b) => {
                            let better = min_d[j] > min_d[b]
                                || (min_d[j] == min_d[b] && dm.items[cands[j]] < dm.items[cands[b]]);
                            Some(if better { j } else { b })
                        }
                    };
                }
                let b = best.expect("candidates remain");
                taken[b] = true;
                picks.push(dm.items[cands[b]].clone());
                for j in 0..cands.len() {
                    min_d[j] = min_d[j].min(dm.mean[(cands[j], cands[b])]);
                }
            }
            Ok(picks)
        }
    }
}
