//! On-disk posterior draws.
//!
//! ```text
//! draws/
//!   context.json            items, doses, feature ids, scale, summary seed
//!   chain_<c>/
//!     draws_<matrix>.csv    iter,row,col,value   (lambda theta xi eta rotation)
//!     draws_<vector>.csv    iter,index,value     (tau omega sigma_x2 mu_y mu_z)
//!     draws_scalars.csv     iter,phi,ell,beta2,sigma_y2
//!     trace.csv
//! ```
//!
//! Floats are written in shortest round-trip form, so a reloaded draw set is
//! bit-identical to the one written.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dosefactor_core::gibbs::{Draw, PosteriorDraws, TraceRow};
use dosefactor_core::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

const MATRICES: [&str; 5] = ["lambda", "theta", "xi", "eta", "rotation"];
const VECTORS: [&str; 5] = ["tau", "omega", "sigma_x2", "mu_y", "mu_z"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawContext {
    pub items: Vec<String>,
    pub holdout: Vec<bool>,
    pub doses: Vec<f64>,
    pub feature_ids: Vec<String>,
    pub y_scale: f64,
    /// Seed the fit used for predictive-band noise.
    pub summary_seed: u64,
    pub alpha: f64,
    pub n_chains: usize,
}

fn matrix<'a>(d: &'a Draw, name: &str) -> &'a DMatrix<f64> {
    match name {
        "lambda" => &d.lambda,
        "theta" => &d.theta,
        "xi" => &d.xi,
        "eta" => &d.eta,
        _ => &d.rotation,
    }
}

fn vector<'a>(d: &'a Draw, name: &str) -> &'a [f64] {
    match name {
        "tau" => &d.tau,
        "omega" => &d.omega,
        "sigma_x2" => &d.sigma_x2,
        "mu_y" => &d.mu_y,
        _ => &d.mu_z,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::output(path, e))
}

fn chain_dir(dir: &Path, c: usize) -> PathBuf {
    dir.join(format!("chain_{c}"))
}

pub fn write_draws(dir: &Path, draws: &PosteriorDraws, summary_seed: u64, alpha: f64) -> Result<()> {
    let n_chains = draws.draws.iter().map(|d| d.chain + 1).max().unwrap_or(0);
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    let ctx = DrawContext {
        items: draws.items.clone(),
        holdout: draws.holdout.clone(),
        doses: draws.doses.clone(),
        feature_ids: draws.feature_ids.clone(),
        y_scale: draws.y_scale,
        summary_seed,
        alpha,
        n_chains,
    };
    let ctx_path = dir.join("context.json");
    let json = serde_json::to_string_pretty(&ctx).expect("context serializes");
    fs::write(&ctx_path, json).map_err(|e| CliError::output(&ctx_path, e))?;

    for c in 0..n_chains {
        let cdir = chain_dir(dir, c);
        fs::create_dir_all(&cdir).map_err(|e| CliError::output(&cdir, e))?;
        let mine: Vec<&Draw> = draws.draws.iter().filter(|d| d.chain == c).collect();
        for name in MATRICES {
            let path = cdir.join(format!("draws_{name}.csv"));
            let mut w = create(&path)?;
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "iter,row,col,value")?;
                for d in &mine {
                    let m = matrix(d, name);
                    for r in 0..m.nrows() {
                        for col in 0..m.ncols() {
                            writeln!(w, "{},{r},{col},{}", d.iter, m[(r, col)])?;
                        }
                    }
                }
                w.flush()
            };
            body().map_err(|e| CliError::output(&path, e))?;
        }
        for name in VECTORS {
            let path = cdir.join(format!("draws_{name}.csv"));
            let mut w = create(&path)?;
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "iter,index,value")?;
                for d in &mine {
                    for (k, v) in vector(d, name).iter().enumerate() {
                        writeln!(w, "{},{k},{v}", d.iter)?;
                    }
                }
                w.flush()
            };
            body().map_err(|e| CliError::output(&path, e))?;
        }
        let path = cdir.join("draws_scalars.csv");
        let mut w = create(&path)?;
        let mut body = || -> std::io::Result<()> {
            writeln!(w, "iter,phi,ell,beta2,sigma_y2")?;
            for d in &mine {
                writeln!(w, "{},{},{},{},{}", d.iter, d.phi, d.ell, d.beta2, d.sigma_y2)?;
            }
            w.flush()
        };
        body().map_err(|e| CliError::output(&path, e))?;

        let path = cdir.join("trace.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        for t in draws.traces.iter().filter(|t| t.chain == c) {
            w.serialize(t).map_err(|e| CliError::output(&path, e.into()))?;
        }
        w.flush().map_err(|e| CliError::output(&path, e))?;
    }
    Ok(())
}

pub fn read_context(dir: &Path) -> Result<DrawContext> {
    let path = dir.join("context.json");
    let text = fs::read_to_string(&path)
        .map_err(|source| CliError::InputFile { flag: "draws", path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|e| CliError::corrupt(&path, e))
}

/// Rows of a long-format file: iteration, indices, value.
fn read_long(path: &Path, n_index: usize) -> Result<Vec<(usize, Vec<usize>, f64)>> {
    let file = File::open(path).map_err(|e| CliError::corrupt(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    let mut rec = csv::ByteRecord::new();
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(CliError::corrupt(path, e)),
        }
        if rec.len() != n_index + 2 {
            return Err(CliError::corrupt(path, format!("row with {} fields", rec.len())));
        }
        let field = |i: usize| std::str::from_utf8(&rec[i]).map_err(|e| CliError::corrupt(path, e));
        let int = |i: usize| -> Result<usize> { field(i)?.parse().map_err(|e| CliError::corrupt(path, e)) };
        let iter = int(0)?;
        let idx = (1..=n_index).map(int).collect::<Result<Vec<_>>>()?;
        let value: f64 = field(n_index + 1)?.parse().map_err(|e| CliError::corrupt(path, e))?;
        out.push((iter, idx, value));
    }
    Ok(out)
}

struct Scalars {
    iter: usize,
    phi: f64,
    ell: f64,
    beta2: f64,
    sigma_y2: f64,
}

fn read_scalars(path: &Path) -> Result<Vec<Scalars>> {
    let file = File::open(path).map_err(|e| CliError::corrupt(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::corrupt(path, e))?;
        if rec.len() != 5 {
            return Err(CliError::corrupt(path, "scalar rows need 5 fields"));
        }
        let f = |i: usize| -> Result<f64> { rec[i].parse().map_err(|e| CliError::corrupt(path, e)) };
        let iter = rec[0].parse().map_err(|e| CliError::corrupt(path, e))?;
        out.push(Scalars { iter, phi: f(1)?, ell: f(2)?, beta2: f(3)?, sigma_y2: f(4)? });
    }
    Ok(out)
}

fn fill_matrices(
    path: &Path,
    rows: Vec<(usize, Vec<usize>, f64)>,
    position: &BTreeMap<usize, usize>,
    n_draws: usize,
    shape: (usize, Option<usize>),
) -> Result<Vec<DMatrix<f64>>> {
    let ncols = match shape.1 {
        Some(c) => c,
        None => rows.iter().map(|r| r.1[1] + 1).max().unwrap_or(0),
    };
    let nrows = shape.0;
    let mut out = vec![DMatrix::from_element(nrows, ncols, f64::NAN); n_draws];
    for (iter, idx, v) in rows {
        let t = *position.get(&iter).ok_or_else(|| CliError::corrupt(path, format!("unknown iteration {iter}")))?;
        let (r, c) = (idx[0], idx[1]);
        if r >= nrows || c >= ncols {
            return Err(CliError::corrupt(path, format!("index ({r}, {c}) outside {nrows}x{ncols}")));
        }
        out[t][(r, c)] = v;
    }
    if out.iter().any(|m| m.iter().any(|v| v.is_nan())) {
        return Err(CliError::corrupt(path, "missing or non-finite entries"));
    }
    Ok(out)
}

fn fill_vectors(
    path: &Path,
    rows: Vec<(usize, Vec<usize>, f64)>,
    position: &BTreeMap<usize, usize>,
    n_draws: usize,
    len: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![f64::NAN; len]; n_draws];
    for (iter, idx, v) in rows {
        let t = *position.get(&iter).ok_or_else(|| CliError::corrupt(path, format!("unknown iteration {iter}")))?;
        let slot = out[t].get_mut(idx[0]).ok_or_else(|| CliError::corrupt(path, format!("index {} outside {len}", idx[0])))?;
        *slot = v;
    }
    if out.iter().any(|m| m.iter().any(|v| v.is_nan())) {
        return Err(CliError::corrupt(path, "missing or non-finite entries"));
    }
    Ok(out)
}

fn read_chain(cdir: &Path, chain: usize, ctx: &DrawContext) -> Result<(Vec<Draw>, Vec<TraceRow>)> {
    let scalars = read_scalars(&cdir.join("draws_scalars.csv"))?;
    let n = scalars.len();
    let position: BTreeMap<usize, usize> = scalars.iter().enumerate().map(|(t, s)| (s.iter, t)).collect();
    if position.len() != n {
        return Err(CliError::corrupt(cdir.join("draws_scalars.csv"), "repeated iteration"));
    }
    let (d, s, items) = (ctx.doses.len(), ctx.feature_ids.len(), ctx.items.len());
    let load = |name: &str, nrows: usize, ncols: Option<usize>| -> Result<Vec<DMatrix<f64>>> {
        let path = cdir.join(format!("draws_{name}.csv"));
        fill_matrices(&path, read_long(&path, 2)?, &position, n, (nrows, ncols))
    };
    let lambda = load("lambda", d, None)?;
    let k = lambda.first().map_or(0, |m| m.ncols());
    let theta = load("theta", s, Some(k))?;
    let xi = load("xi", s, None)?;
    let j = xi.first().map_or(0, |m| m.ncols());
    let eta = load("eta", k, Some(items))?;
    let rotation = load("rotation", k, Some(k))?;
    let vec = |name: &str, len: usize| -> Result<Vec<Vec<f64>>> {
        let path = cdir.join(format!("draws_{name}.csv"));
        fill_vectors(&path, read_long(&path, 1)?, &position, n, len)
    };
    let tau = vec("tau", k)?;
    let omega = vec("omega", j)?;
    let sigma_x2 = vec("sigma_x2", s)?;
    let mu_y = vec("mu_y", d)?;
    let mu_z = vec("mu_z", s)?;

    let mut draws = Vec::with_capacity(n);
    let mut parts = lambda
        .into_iter()
        .zip(theta)
        .zip(xi)
        .zip(eta)
        .zip(rotation)
        .zip(tau)
        .zip(omega)
        .zip(sigma_x2)
        .zip(mu_y)
        .zip(mu_z);
    for sc in &scalars {
        let (((((((((lambda, theta), xi), eta), rotation), tau), omega), sigma_x2), mu_y), mu_z) =
            parts.next().expect("one entry per draw");
        draws.push(Draw {
            chain,
            iter: sc.iter,
            lambda,
            theta,
            xi,
            eta,
            tau,
            omega,
            phi: sc.phi,
            ell: sc.ell,
            beta2: sc.beta2,
            sigma_y2: sc.sigma_y2,
            sigma_x2,
            mu_y,
            mu_z,
            rotation,
        });
    }
    let tpath = cdir.join("trace.csv");
    let file = File::open(&tpath).map_err(|e| CliError::corrupt(&tpath, e))?;
    let traces = csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRow>, _>>()
        .map_err(|e| CliError::corrupt(&tpath, e))?;
    Ok((draws, traces))
}

pub fn read_draws(dir: &Path) -> Result<(PosteriorDraws, DrawContext)> {
    let ctx = read_context(dir)?;
    if ctx.holdout.len() != ctx.items.len() || !(ctx.y_scale > 0.0) {
        return Err(CliError::corrupt(dir.join("context.json"), "inconsistent context"));
    }
    let mut all = Vec::new();
    let mut traces = Vec::new();
    for c in 0..ctx.n_chains {
        let (d, t) = read_chain(&chain_dir(dir, c), c, &ctx)?;
        all.extend(d);
        traces.extend(t);
    }
    if all.is_empty() {
        return Err(CliError::corrupt(dir, "no draws"));
    }
    let k = all[0].lambda.ncols();
    if all.iter().any(|d| d.lambda.ncols() != k || d.xi.ncols() != all[0].xi.ncols()) {
        return Err(CliError::corrupt(dir, "chains disagree on the number of factors"));
    }
    let draws = PosteriorDraws {
        items: ctx.items.clone(),
        holdout: ctx.holdout.clone(),
        doses: ctx.doses.clone(),
        feature_ids: ctx.feature_ids.clone(),
        y_scale: ctx.y_scale,
        draws: all,
        traces,
    };
    Ok((draws, ctx))
}
