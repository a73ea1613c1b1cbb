//! Canonical dataset representation and preprocessing.
//!
//! Features are held as an `S x N` matrix (one column per item). Response
//! observations are long-format `(dose, response)` pairs per item with
//! replicates kept as separate observations; held-out items keep their
//! responses aside in [`Dataset::withheld`] so the sampler never sees them.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    /// Strictly positive, right-skewed; modelled on the log scale.
    LogContinuous,
    /// 0/1 indicator, probit-style latent augmentation.
    Binary,
    /// Non-negative integer, rounded-latent augmentation.
    Count,
}

impl FeatureKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Some(Self::Continuous),
            "log_continuous" => Some(Self::LogContinuous),
            "binary" => Some(Self::Binary),
            "count" => Some(Self::Count),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Continuous => "continuous",
            Self::LogContinuous => "log_continuous",
            Self::Binary => "binary",
            Self::Count => "count",
        }
    }

    /// Entries of this kind are observed directly (no latent augmentation).
    pub fn is_continuous(&self) -> bool {
        matches!(self, Self::Continuous | Self::LogContinuous)
    }
}

/// One raw response row as read from a responses file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub item_id: String,
    pub dose: f64,
    pub response: f64,
}

/// A response observation attached to an item; `dose_index` points into
/// [`Dataset::doses`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub dose_index: usize,
    pub dose: f64,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub items: Vec<String>,
    pub feature_ids: Vec<String>,
    /// `S x N`; continuous kinds on the linked scale, raw integers otherwise.
    pub x: DMatrix<f64>,
    pub kinds: Vec<FeatureKind>,
    /// Sorted unique doses over training and withheld observations.
    pub doses: Vec<f64>,
    /// Training observations per item (empty for held-out items).
    pub obs: Vec<Vec<Observation>>,
    /// Responses of held-out items, in original units, kept for scoring.
    pub withheld: Vec<Vec<Observation>>,
    pub holdout: Vec<bool>,
    /// Training responses have been multiplied by this factor.
    pub y_scale: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub dropped_zero_variance: usize,
    pub dropped_duplicate: usize,
    pub dropped_near_constant: usize,
    pub merged_items: usize,
    pub log_transformed_counts: Vec<String>,
    pub y_scale_factor: f64,
    pub dose_floor: Option<f64>,
    pub dropped_low_dose_obs: usize,
    /// Centering/scaling statistics use every item, held-out ones included.
    pub link_stats_include_holdout: bool,
}

fn check_kind_value(kind: FeatureKind, v: f64) -> bool {
    if !v.is_finite() {
        return false;
    }
    match kind {
        FeatureKind::Continuous => true,
        FeatureKind::LogContinuous => v > 0.0,
        FeatureKind::Binary => v == 0.0 || v == 1.0,
        FeatureKind::Count => v >= 0.0 && v == libm::floor(v),
    }
}

fn unique_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn dose_index(doses: &[f64], d: f64) -> usize {
    doses.binary_search_by(|x| x.total_cmp(&d)).expect("dose present in grid")
}

impl Dataset {
    /// Assemble and validate a dataset.
    ///
    /// `x` is `S x N` with columns ordered like `items`. Responses for items in
    /// `holdout_ids` are withheld from training.
    pub fn new(
        items: Vec<String>,
        feature_ids: Vec<String>,
        x: DMatrix<f64>,
        kinds: Vec<FeatureKind>,
        responses: &[ResponseRecord],
        holdout_ids: &[String],
    ) -> Result<Self> {
        let n = items.len();
        let s = feature_ids.len();
        if x.ncols() != n || x.nrows() != s {
            return Err(Error::data(format!(
                "feature matrix is {}x{}, expected {s}x{n}",
                x.nrows(),
                x.ncols()
            )));
        }
        if kinds.len() != s {
            return Err(Error::data(format!("{} kinds for {s} features", kinds.len())));
        }
        let mut index = BTreeMap::new();
        for (i, id) in items.iter().enumerate() {
            if index.insert(id.as_str(), i).is_some() {
                return Err(Error::data(format!("duplicate item {id:?}")));
            }
        }
        let mut seen_features = BTreeMap::new();
        for f in &feature_ids {
            if seen_features.insert(f.as_str(), ()).is_some() {
                return Err(Error::data(format!("duplicate feature {f:?}")));
            }
        }
        for (si, kind) in kinds.iter().enumerate() {
            for i in 0..n {
                let v = x[(si, i)];
                if !check_kind_value(*kind, v) {
                    return Err(Error::data(format!(
                        "feature {:?} of kind {} has invalid value {v} for item {:?}",
                        feature_ids[si],
                        kind.as_str(),
                        items[i]
                    )));
                }
            }
        }
        let mut holdout = alloc::vec![false; n];
        for h in holdout_ids {
            let i = *index.get(h.as_str()).ok_or_else(|| Error::UnknownItem(h.clone()))?;
            holdout[i] = true;
        }
        let mut positions = Vec::with_capacity(responses.len());
        for r in responses {
            if !r.dose.is_finite() || !r.response.is_finite() {
                return Err(Error::data(format!("non-finite response row for item {:?}", r.item_id)));
            }
            let i = *index.get(r.item_id.as_str()).ok_or_else(|| Error::UnknownItem(r.item_id.clone()))?;
            positions.push(i);
        }
        let doses = unique_sorted(responses.iter().map(|r| r.dose).collect());
        let mut obs = alloc::vec![Vec::new(); n];
        let mut withheld = alloc::vec![Vec::new(); n];
        for (r, &i) in responses.iter().zip(&positions) {
            let o = Observation { dose_index: dose_index(&doses, r.dose), dose: r.dose, response: r.response };
            if holdout[i] {
                withheld[i].push(o);
            } else {
                obs[i].push(o);
            }
        }
        let ds = Dataset { items, feature_ids, x, kinds, doses, obs, withheld, holdout, y_scale: 1.0 };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn n_doses(&self) -> usize {
        self.doses.len()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|x| x == id)
    }

    /// Replicate-count matrix `O` (`D x N`) over training observations.
    pub fn counts(&self) -> DMatrix<f64> {
        let mut o = DMatrix::zeros(self.n_doses(), self.n_items());
        for (i, list) in self.obs.iter().enumerate() {
            for ob in list {
                o[(ob.dose_index, i)] += 1.0;
            }
        }
        o
    }

    pub fn n_train_obs(&self) -> usize {
        self.obs.iter().map(Vec::len).sum()
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_items();
        if self.x.ncols() != n || self.x.nrows() != self.n_features() || self.kinds.len() != self.n_features() {
            return Err(Error::data("feature matrix / kinds shape mismatch"));
        }
        if self.obs.len() != n || self.withheld.len() != n || self.holdout.len() != n {
            return Err(Error::data("per-item vectors have wrong length"));
        }
        if self.doses.windows(2).any(|w| w[0] >= w[1]) || self.doses.iter().any(|d| !d.is_finite()) {
            return Err(Error::data("dose grid must be finite and strictly increasing"));
        }
        for i in 0..n {
            if self.holdout[i] && !self.obs[i].is_empty() {
                return Err(Error::data(format!("held-out item {:?} has training observations", self.items[i])));
            }
            for o in self.obs[i].iter().chain(&self.withheld[i]) {
                if self.doses.get(o.dose_index) != Some(&o.dose) {
                    return Err(Error::data("observation dose index out of sync with grid"));
                }
            }
        }
        if !(self.y_scale > 0.0 && self.y_scale.is_finite()) {
            return Err(Error::data("response scale factor must be positive"));
        }
        Ok(())
    }

    fn select_features(&self, keep: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(keep.len(), self.n_items(), |r, c| self.x[(keep[r], c)]);
        Dataset {
            feature_ids: keep.iter().map(|&k| self.feature_ids[k].clone()).collect(),
            kinds: keep.iter().map(|&k| self.kinds[k]).collect(),
            x,
            ..self.clone()
        }
    }

    fn regrid(mut self) -> Dataset {
        let doses = unique_sorted(self.obs.iter().chain(&self.withheld).flatten().map(|o| o.dose).collect());
        for o in self.obs.iter_mut().chain(self.withheld.iter_mut()).flatten() {
            o.dose_index = dose_index(&doses, o.dose);
        }
        self.doses = doses;
        self
    }
}

/// Drop zero-variance features, exact duplicate feature rows and features
/// where more than `near_constant_frac` of items share one value.
pub fn filter_features(ds: &Dataset, near_constant_frac: f64) -> Result<(Dataset, PreprocessReport)> {
    let n = ds.n_items();
    let mut report = PreprocessReport::default();
    let mut keep = Vec::new();
    let mut seen_rows: BTreeMap<Vec<u64>, ()> = BTreeMap::new();
    let mut candidates = Vec::new();
    for s in 0..ds.n_features() {
        let row: Vec<f64> = ds.x.row(s).iter().copied().collect();
        if row.iter().all(|&v| v == row[0]) {
            report.dropped_zero_variance += 1;
            continue;
        }
        candidates.push((s, row));
    }
    let mut unique = Vec::new();
    for (s, row) in candidates {
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen_rows.insert(key, ()).is_some() {
            report.dropped_duplicate += 1;
            continue;
        }
        unique.push((s, row));
    }
    for (s, row) in unique {
        let mut tally: BTreeMap<u64, usize> = BTreeMap::new();
        for v in &row {
            *tally.entry((v + 0.0).to_bits()).or_default() += 1;
        }
        let mode = tally.values().copied().max().unwrap_or(0);
        if mode as f64 > near_constant_frac * n as f64 {
            report.dropped_near_constant += 1;
            continue;
        }
        keep.push(s);
    }
    if keep.is_empty() {
        return Err(Error::data("feature filtering removed every feature"));
    }
    Ok((ds.select_features(&keep), report))
}

/// Put continuous features on the linked, standardized scale.
///
/// Count features whose maximum exceeds `count_log_threshold` become
/// `LogContinuous` through `log(1 + x)`. Binary and remaining count
/// features are left as raw integers for latent augmentation.
pub fn apply_links(ds: &Dataset, count_log_threshold: u32) -> Result<Dataset> {
    let mut out = ds.clone();
    let n = ds.n_items();
    for s in 0..ds.n_features() {
        let kind = ds.kinds[s];
        let transform: Option<fn(f64) -> f64> = match kind {
            FeatureKind::Continuous => Some(|v| v),
            FeatureKind::LogContinuous => {
                if let Some(bad) = ds.x.row(s).iter().find(|&&v| v <= 0.0) {
                    return Err(Error::data(format!(
                        "log_continuous feature {:?} has non-positive value {bad}",
                        ds.feature_ids[s]
                    )));
                }
                Some(libm::log)
            }
            FeatureKind::Count => {
                let max = ds.x.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max > count_log_threshold as f64 {
                    out.kinds[s] = FeatureKind::LogContinuous;
                    Some(libm::log1p)
                } else {
                    None
                }
            }
            FeatureKind::Binary => None,
        };
        let Some(f) = transform else { continue };
        let vals: Vec<f64> = ds.x.row(s).iter().map(|&v| f(v)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let sd = libm::sqrt(var);
        for (i, v) in vals.into_iter().enumerate() {
            out.x[(s, i)] = if sd > 0.0 { (v - mean) / sd } else { v - mean };
        }
    }
    Ok(out)
}

/// Merge items with identical feature vectors into one multiply-observed
/// item named after the lexicographically first member. Returns the number
/// of items absorbed.
///
/// The merged item is held out only when every member was; otherwise the
/// withheld responses of held-out members are discarded so nothing held out
/// leaks into training.
pub fn merge_identical_items(ds: &Dataset) -> (Dataset, usize) {
    let n = ds.n_items();
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    let mut order = Vec::new();
    for i in 0..n {
        let key: Vec<u64> = ds.x.column(i).iter().map(|v| (v + 0.0).to_bits()).collect();
        let g = groups.entry(key).or_default();
        if g.is_empty() {
            order.push(i);
        }
        g.push(i);
    }
    if order.len() == n {
        return (ds.clone(), 0);
    }
    let mut by_first: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for members in groups.into_values() {
        by_first.insert(members[0], members);
    }
    let mut items = Vec::new();
    let mut obs = Vec::new();
    let mut withheld = Vec::new();
    let mut holdout = Vec::new();
    for &first in &order {
        let members = &by_first[&first];
        let name = members.iter().map(|&m| &ds.items[m]).min().expect("non-empty group").clone();
        let all_holdout = members.iter().all(|&m| ds.holdout[m]);
        items.push(name);
        holdout.push(all_holdout);
        obs.push(members.iter().flat_map(|&m| ds.obs[m].iter().copied()).collect::<Vec<_>>());
        withheld.push(if all_holdout {
            members.iter().flat_map(|&m| ds.withheld[m].iter().copied()).collect()
        } else {
            Vec::new()
        });
    }
    let x = DMatrix::from_fn(ds.n_features(), order.len(), |r, c| ds.x[(r, order[c])]);
    let merged = n - order.len();
    let out = Dataset { items, x, obs, withheld, holdout, ..ds.clone() }.regrid();
    (out, merged)
}

/// Scale training responses so their Frobenius norm matches that of `X`.
/// Returns the dataset and the applied factor `c = |X|_F / |Y|_F`.
pub fn rescale_response(ds: &Dataset) -> Result<(Dataset, f64)> {
    let y_norm = libm::sqrt(ds.obs.iter().flatten().map(|o| o.response * o.response).sum::<f64>());
    if ds.n_train_obs() == 0 {
        return Err(Error::data("no training response observations"));
    }
    if !(y_norm > 0.0) {
        return Err(Error::data("all training responses are zero; scale factor undefined"));
    }
    let c = ds.x.norm() / y_norm;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::data("feature matrix has zero Frobenius norm"));
    }
    let mut out = ds.clone();
    for o in out.obs.iter_mut().flatten() {
        o.response *= c;
    }
    out.y_scale *= c;
    Ok((out, c))
}

/// Map a value on the scaled response axis back to original units.
pub fn unscale_response(value: f64, y_scale: f64) -> f64 {
    value / y_scale
}

/// Drop observations with dose below `floor` and rebuild the dose grid.
pub fn filter_doses(ds: &Dataset, floor: f64) -> (Dataset, usize) {
    let mut out = ds.clone();
    let mut dropped = 0;
    for list in out.obs.iter_mut().chain(out.withheld.iter_mut()) {
        let before = list.len();
        list.retain(|o| o.dose >= floor);
        dropped += before - list.len();
    }
    (out.regrid(), dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub near_constant_frac: f64,
    pub count_log_threshold: u32,
    pub dose_floor: Option<f64>,
    pub merge_identical: bool,
    pub rescale: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self { near_constant_frac: 0.99, count_log_threshold: 10, dose_floor: None, merge_identical: true, rescale: true }
    }
}

/// Full preprocessing pipeline: dose floor, feature filtering, links,
/// identical-item merging and Frobenius rescaling.
pub fn preprocess(ds: &Dataset, opts: &PreprocessOptions) -> Result<(Dataset, PreprocessReport)> {
    let (ds, dropped_low) = match opts.dose_floor {
        Some(f) => filter_doses(ds, f),
        None => (ds.clone(), 0),
    };
    let (filtered, mut report) = filter_features(&ds, opts.near_constant_frac)?;
    let linked = apply_links(&filtered, opts.count_log_threshold)?;
    report.log_transformed_counts = filtered
        .kinds
        .iter()
        .zip(&linked.kinds)
        .zip(&linked.feature_ids)
        .filter(|((a, b), _)| **a == FeatureKind::Count && **b == FeatureKind::LogContinuous)
        .map(|(_, id)| id.to_string())
        .collect();
    let (merged, n_merged) = if opts.merge_identical { merge_identical_items(&linked) } else { (linked, 0) };
    report.merged_items = n_merged;
    let (out, c) = if opts.rescale { rescale_response(&merged)? } else { (merged, 1.0) };
    report.y_scale_factor = c;
    report.dose_floor = opts.dose_floor;
    report.dropped_low_dose_obs = dropped_low;
    report.link_stats_include_holdout = true;
    out.validate()?;
    Ok((out, report))
}
