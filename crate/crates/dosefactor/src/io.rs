//! Dataset files: `features.csv`, `kinds.csv`, `responses.csv` and an
//! optional `holdout.txt`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dosefactor_core::data::{Dataset, FeatureKind, ResponseRecord};
use dosefactor_core::DMatrix;

use crate::error::{CliError, Result};

#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub features: PathBuf,
    pub responses: PathBuf,
    pub kinds: PathBuf,
    pub holdout: Option<PathBuf>,
}

impl DatasetPaths {
    /// The standard file names inside `dir`; `holdout.txt` only if present.
    pub fn in_dir(dir: &Path) -> Self {
        let holdout = dir.join("holdout.txt");
        Self {
            features: dir.join("features.csv"),
            responses: dir.join("responses.csv"),
            kinds: dir.join("kinds.csv"),
            holdout: holdout.exists().then_some(holdout),
        }
    }

    /// `(flag, path)` for every input, in a fixed order.
    pub fn inputs(&self) -> Vec<(&'static str, &Path)> {
        let mut v = vec![
            ("features", self.features.as_path()),
            ("responses", self.responses.as_path()),
            ("kinds", self.kinds.as_path()),
        ];
        if let Some(h) = &self.holdout {
            v.push(("holdout", h.as_path()));
        }
        v
    }
}

fn open(flag: &'static str, path: &Path) -> Result<File> {
    File::open(path).map_err(|source| CliError::InputFile { flag, path: path.to_path_buf(), source })
}

fn csv_reader(flag: &'static str, path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(flag, path)?))
}

fn parse_f64(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| CliError::malformed(path, format!("line {line}: cannot parse {what} {field:?} as a number")))
}

fn check_header(path: &Path, headers: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().collect();
    if got != want {
        return Err(CliError::malformed(path, format!("header must be {:?}, found {:?}", want.join(","), got.join(","))));
    }
    Ok(())
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

struct FeatureTable {
    items: Vec<String>,
    feature_ids: Vec<String>,
    /// Row per item.
    rows: Vec<Vec<f64>>,
}

fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut rdr = csv_reader("features", path)?;
    let headers = rdr.headers().map_err(|e| CliError::malformed(path, e))?.clone();
    if headers.get(0) != Some("item_id") {
        return Err(CliError::malformed(path, "first column must be item_id"));
    }
    let feature_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut seen = BTreeSet::new();
    for f in &feature_ids {
        if !seen.insert(f.as_str()) {
            return Err(CliError::malformed(path, format!("duplicate (item, feature) cell: feature {f:?} appears twice")));
        }
    }
    let mut items = Vec::new();
    let mut rows = Vec::new();
    let mut seen_items = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::malformed(path, e))?;
        let line = line_of(&rec);
        let id = rec.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(CliError::malformed(path, format!("line {line}: empty item id")));
        }
        if !seen_items.insert(id.clone()) {
            return Err(CliError::malformed(path, format!("duplicate (item, feature) cell: item {id:?} appears twice")));
        }
        let row = rec.iter().skip(1).map(|f| parse_f64(path, line, f, "feature value")).collect::<Result<Vec<_>>>()?;
        items.push(id);
        rows.push(row);
    }
    Ok(FeatureTable { items, feature_ids, rows })
}

fn read_kinds(path: &Path) -> Result<BTreeMap<String, FeatureKind>> {
    let mut rdr = csv_reader("kinds", path)?;
    let headers = rdr.headers().map_err(|e| CliError::malformed(path, e))?.clone();
    check_header(path, &headers, &["feature_id", "kind"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::malformed(path, e))?;
        let line = line_of(&rec);
        let (id, kind) = (&rec[0], &rec[1]);
        let kind = FeatureKind::parse(kind)
            .ok_or_else(|| CliError::malformed(path, format!("line {line}: unknown kind {kind:?}")))?;
        if out.insert(id.to_string(), kind).is_some() {
            return Err(CliError::malformed(path, format!("line {line}: feature {id:?} listed twice")));
        }
    }
    Ok(out)
}

fn read_responses(path: &Path) -> Result<Vec<ResponseRecord>> {
    let mut rdr = csv_reader("responses", path)?;
    let headers = rdr.headers().map_err(|e| CliError::malformed(path, e))?.clone();
    check_header(path, &headers, &["item_id", "dose", "response"])?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::malformed(path, e))?;
        let line = line_of(&rec);
        out.push(ResponseRecord {
            item_id: rec[0].to_string(),
            dose: parse_f64(path, line, &rec[1], "dose")?,
            response: parse_f64(path, line, &rec[2], "response")?,
        });
    }
    Ok(out)
}

fn read_holdout(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .map_err(|source| CliError::InputFile { flag: "holdout", path: path.to_path_buf(), source })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<Dataset> {
    let table = read_features(&paths.features)?;
    let kinds = read_kinds(&paths.kinds)?;
    let responses = read_responses(&paths.responses)?;
    let holdout = match &paths.holdout {
        Some(p) => read_holdout(p)?,
        None => Vec::new(),
    };
    let listed: BTreeSet<&str> = kinds.keys().map(String::as_str).collect();
    let present: BTreeSet<&str> = table.feature_ids.iter().map(String::as_str).collect();
    if let Some(f) = present.difference(&listed).next() {
        return Err(CliError::malformed(&paths.kinds, format!("no kind given for feature {f:?}")));
    }
    if let Some(f) = listed.difference(&present).next() {
        return Err(CliError::malformed(&paths.kinds, format!("feature {f:?} is not a column of the feature file")));
    }
    let (s, n) = (table.feature_ids.len(), table.items.len());
    let x = DMatrix::from_fn(s, n, |r, c| table.rows[c][r]);
    let kinds = table.feature_ids.iter().map(|f| kinds[f]).collect();
    Ok(Dataset::new(table.items, table.feature_ids, x, kinds, &responses, &holdout)?)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::output(path, e.into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::output(path, e))
}

/// Write `ds` in the four-file layout (responses in original units, both
/// training and withheld observations).
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<DatasetPaths> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let paths = DatasetPaths {
        features: dir.join("features.csv"),
        responses: dir.join("responses.csv"),
        kinds: dir.join("kinds.csv"),
        holdout: Some(dir.join("holdout.txt")),
    };
    let mut w = csv::Writer::from_writer(create(&paths.features)?);
    let mut header = vec!["item_id".to_string()];
    header.extend(ds.feature_ids.iter().cloned());
    w.write_record(&header).map_err(csv_err(&paths.features))?;
    for (i, id) in ds.items.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(ds.x.column(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(&paths.features))?;
    }
    w.flush().map_err(|e| CliError::output(&paths.features, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.kinds)?);
    w.write_record(["feature_id", "kind"]).map_err(csv_err(&paths.kinds))?;
    for (f, k) in ds.feature_ids.iter().zip(&ds.kinds) {
        w.write_record([f.as_str(), k.as_str()]).map_err(csv_err(&paths.kinds))?;
    }
    w.flush().map_err(|e| CliError::output(&paths.kinds, e))?;

    let mut w = csv::Writer::from_writer(create(&paths.responses)?);
    w.write_record(["item_id", "dose", "response"]).map_err(csv_err(&paths.responses))?;
    for (i, id) in ds.items.iter().enumerate() {
        for o in ds.obs[i].iter().chain(&ds.withheld[i]) {
            let y = o.response / ds.y_scale;
            w.write_record([id.clone(), o.dose.to_string(), y.to_string()]).map_err(csv_err(&paths.responses))?;
        }
    }
    w.flush().map_err(|e| CliError::output(&paths.responses, e))?;

    let hpath = paths.holdout.as_deref().expect("set above");
    let mut h = create(hpath)?;
    for (id, _) in ds.items.iter().zip(&ds.holdout).filter(|(_, h)| **h) {
        writeln!(h, "{id}").map_err(|e| CliError::output(hpath, e))?;
    }
    h.flush().map_err(|e| CliError::output(hpath, e))?;
    Ok(paths)
}
