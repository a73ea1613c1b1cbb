//! Result files: `summaries.json`, `priority.csv`, `distance.csv`,
//! `simstudy.csv` and per-item plot data.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use dosefactor_core::distance::DistanceMatrix;
use dosefactor_core::posterior::{CurveSummary, Priority, PriorityRule};
use dosefactor_core::simulate::{CellSummary, StudyRow};
use serde::Serialize;

use crate::error::{CliError, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| CliError::output(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_fail(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::output(path, e.into())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::output(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::malformed(path, e))
}

pub fn write_summaries(path: &Path, summaries: &[CurveSummary]) -> Result<()> {
    write_json(path, &summaries)
}

pub fn write_priority(path: &Path, rule: PriorityRule, rows: &[Priority]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = csv_fail(path);
    w.write_record(["rank", "item_id", "rule", "score"]).map_err(&fail)?;
    for p in rows {
        w.write_record([p.rank.to_string(), p.item_id.clone(), rule.as_str().to_string(), p.score.to_string()])
            .map_err(&fail)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// One row per unordered pair; interval columns are empty when the matrix
/// carries no intervals.
pub fn write_distance(path: &Path, dm: &DistanceMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = csv_fail(path);
    w.write_record(["item_i", "item_j", "mean", "lo", "hi"]).map_err(&fail)?;
    let cell = |m: &Option<dosefactor_core::DMatrix<f64>>, a: usize, b: usize| m.as_ref().map_or(String::new(), |m| m[(a, b)].to_string());
    for a in 0..dm.len() {
        for b in (a + 1)..dm.len() {
            w.write_record([
                dm.items[a].clone(),
                dm.items[b].clone(),
                dm.mean[(a, b)].to_string(),
                cell(&dm.lo, a, b),
                cell(&dm.hi, a, b),
            ])
            .map_err(&fail)?;
        }
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_simstudy(path: &Path, rows: &[StudyRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = csv_fail(path);
    w.write_record(["family", "K", "J", "S_rel", "S_irr", "rep", "metric", "value"]).map_err(&fail)?;
    for r in rows {
        w.write_record([
            r.family.as_str().to_string(),
            r.k.to_string(),
            r.j.to_string(),
            r.s_rel.to_string(),
            r.s_irr.to_string(),
            r.rep.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])
        .map_err(&fail)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

pub fn write_study_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = csv_fail(path);
    w.write_record(["family", "K", "J", "S_rel", "S_irr", "metric", "mean", "q025", "q975", "n"]).map_err(&fail)?;
    for c in cells {
        w.write_record([
            c.family.as_str().to_string(),
            c.k.to_string(),
            c.j.to_string(),
            c.s_rel.to_string(),
            c.s_irr.to_string(),
            c.metric.clone(),
            c.mean.to_string(),
            c.q025.to_string(),
            c.q975.to_string(),
            c.n.to_string(),
        ])
        .map_err(&fail)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}

/// `dose,mean,lo,hi,data_lo,data_hi` for external plotting.
pub fn write_plot_data(path: &Path, s: &CurveSummary) -> Result<()> {
    let mut w = csv_writer(path)?;
    let fail = csv_fail(path);
    w.write_record(["dose", "mean", "lo", "hi", "data_lo", "data_hi"]).map_err(&fail)?;
    for r in 0..s.doses.len() {
        w.write_record(
            [s.doses[r], s.mean_curve[r], s.mean_band_lo[r], s.mean_band_hi[r], s.data_band_lo[r], s.data_band_hi[r]]
                .map(|v| v.to_string()),
        )
        .map_err(&fail)?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}
