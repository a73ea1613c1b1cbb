//! Subcommands: `fit`, `predict`, `distance`, `summarize`, `simulate` and
//! `generate`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dosefactor_core::data::Dataset;
use dosefactor_core::distance::{coverage_design, neighbors, pairwise_distance, DesignMode, WeightMode};
use dosefactor_core::fit::fit;
use dosefactor_core::gibbs::{ChainConfig, PosteriorDraws};
use dosefactor_core::model::Hyperparams;
use dosefactor_core::posterior::{component_summaries, predict_curves, predict_item, prioritize, PriorityRule};
use dosefactor_core::random::derive_seed;
use dosefactor_core::simulate::{
    cell_seed, gen_toxcast_like, generate, holdout_scores, metric_rows, run_cell, summarize_study, SimFamily,
    SimSpec, ToxcastLikeSpec,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::draws::{read_draws, write_draws};
use crate::error::{CliError, Result};
use crate::io::{load_dataset, write_dataset, DatasetPaths};
use crate::manifest::{RunManifest, Stopwatch};
use crate::output::{
    write_distance, write_json, write_plot_data, write_priority, write_simstudy, write_study_summary, write_summaries,
};
use crate::runner::Parallel;

#[derive(Debug, Parser)]
#[command(name = "dosefactor", version, about = "Sparse-and-smooth Bayesian factor model for dose-response screening data")]
pub struct Cli {
    /// Master seed (overrides `mcmc.seed` from the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for every output of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess, sample, align and summarize.
    Fit(FitArgs),
    /// Curve summaries for items of a fitted run.
    Predict(PredictArgs),
    /// Expected latent distances, neighbours and coverage designs.
    Distance(DistanceArgs),
    /// Component summaries, truncation adequacy and priority lists.
    Summarize(SummarizeArgs),
    /// Simulation study over a grid of generator settings.
    Simulate(SimulateArgs),
    /// Write one synthetic dataset in the input file format.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub kinds: PathBuf,
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub j: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// `draws/` directory written by `fit`.
    #[arg(long)]
    pub draws: PathBuf,
    /// Comma-separated item ids; all items when omitted.
    #[arg(long, value_delimiter = ',')]
    pub items: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write `plots/<item>.csv`.
    #[arg(long)]
    pub plot_data: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    TauWeighted,
    Unweighted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DesignArg {
    FillIn,
    VentureOut,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long, value_enum, default_value = "tau-weighted")]
    pub weights: WeightArg,
    /// Credible level of the per-pair intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Restrict to these items (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub items: Vec<String>,
    /// Report the nearest neighbours of this item.
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Pick held-out items to screen next, relative to the training items.
    #[arg(long, value_enum)]
    pub design: Option<DesignArg>,
    #[arg(long, default_value_t = 10)]
    pub pick: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    MaxLowerBand,
    ExpectedAc50,
    MaxMean,
    NearestToActives,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long)]
    pub draws: PathBuf,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "max-lower-band")]
    pub rule: RuleArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Aligned,
    Polynomial,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Cells separated by `;`, settings by `,`: `K=3,J=5;K=5,J=2`. Keys: K, J,
    /// N, D, S, S_rel, S_irr, sigma_y, sigma_x, inactive, holdout,
    /// alpha_decay, sparsity.
    #[arg(long, default_value = "")]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Also write every generated dataset.
    #[arg(long)]
    pub write_data: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateFamily {
    Aligned,
    Polynomial,
    ToxcastLike,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub family: GenerateFamily,
    /// Single cell of settings, as for `simulate`.
    #[arg(long, default_value = "")]
    pub grid: String,
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Distance(a) => cmd_distance(cli, a),
        Command::Summarize(a) => cmd_summarize(cli, a),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Generate(a) => cmd_generate(cli, a),
    }
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    let dir = cli.out.as_deref().ok_or_else(|| CliError::Usage("this command needs --out".into()))?;
    fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    Ok(dir)
}

fn optional_out(cli: &Cli) -> Result<Option<&Path>> {
    match &cli.out {
        Some(_) => out_dir(cli).map(Some),
        None => Ok(None),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.mcmc.seed = s;
    }
    Ok(cfg)
}

fn new_manifest(cli: &Cli, command: &str, cfg: &RunConfig, threads: usize) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, cfg.mcmc.seed, threads, serde_json::to_value(cfg).expect("config serializes"));
    if let Some(p) = &cli.config {
        m.add_input("config", p)?;
    }
    Ok(m)
}

fn add_draw_inputs(m: &mut RunManifest, dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).map_err(|e| CliError::corrupt(&d, e))? {
            let p = e.map_err(|e| CliError::corrupt(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    for f in files {
        m.add_input("draws", &f)?;
    }
    Ok(())
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

pub fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<()> {
    let mut cfg = load_config(cli)?;
    let mc = &mut cfg.mcmc;
    for (slot, v) in [(&mut mc.n_iter, a.iter), (&mut mc.burn_in, a.burn_in), (&mut mc.thin, a.thin), (&mut mc.n_chains, a.chains)] {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(k) = a.k {
        cfg.model.k = k;
    }
    if let Some(j) = a.j {
        cfg.model.j = j;
    }
    cfg.validate()?;
    let out = out_dir(cli)?;
    let par = Parallel::new(cli.threads)?;
    let mut m = new_manifest(cli, "fit", &cfg, par.threads())?;
    let mut sw = Stopwatch::start();

    let paths =
        DatasetPaths { features: a.features.clone(), responses: a.responses.clone(), kinds: a.kinds.clone(), holdout: a.holdout.clone() };
    let ds = load_dataset(&paths)?;
    for (flag, p) in paths.inputs() {
        m.add_input(flag, p)?;
    }
    sw.lap(&mut m, "load");

    let runner = |ds: &Dataset, hp: &Hyperparams, cc: &ChainConfig| par.run_chains(ds, hp, cc);
    let fitted = fit(&ds, &cfg.fit_options(), &cfg.hyperparams(), &cfg.mcmc, Some(&runner))?;
    sw.lap(&mut m, "sample_align_summarize");

    let summary_seed = derive_seed(cfg.mcmc.seed, u64::MAX);
    write_draws(&out.join("draws"), &fitted.draws, summary_seed, cfg.model.alpha)?;
    write_json(&out.join("preprocess_report.json"), &fitted.report)?;
    write_summaries(&out.join("summaries.json"), &fitted.summaries)?;
    write_json(&out.join("components.json"), &fitted.components)?;
    let prio = prioritize(&fitted.summaries, cfg.model.alpha, PriorityRule::MaxLowerBand, None)?;
    write_priority(&out.join("priority.csv"), PriorityRule::MaxLowerBand, &prio)?;
    let withheld = fitted.dataset.withheld.iter().any(|w| !w.is_empty());
    let scores = if withheld { Some(holdout_scores(&fitted)?) } else { None };
    if let Some(s) = &scores {
        write_json(&out.join("holdout.json"), s)?;
    }
    sw.lap(&mut m, "write");

    for c in 0..cfg.mcmc.n_chains {
        m.derived_seeds.insert(format!("chain_{c}_init"), derive_seed(cfg.mcmc.seed, c as u64));
    }
    m.derived_seeds.insert("summary".into(), summary_seed);
    m.report("preprocess", &fitted.report);
    m.report("alignment", &fitted.alignment);
    m.add_outputs(out)?;
    m.write(out)?;

    println!(
        "fit: {} items, {} features, {} doses, {} draws; misalignment {:.3}; K adequate: {}",
        fitted.dataset.n_items(),
        fitted.dataset.n_features(),
        fitted.dataset.n_doses(),
        fitted.draws.len(),
        fitted.alignment.misalignment,
        yes_no(fitted.components.k_adequate)
    );
    if let Some(s) = scores {
        println!(
            "holdout: {} obs, coverage {:.3}, mse {:.4} (training mean {:.4}, zero {:.4})",
            s.n_obs, s.coverage, s.mse, s.mse_train_mean, s.mse_zero
        );
    }
    Ok(())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn draws_for(cli: &Cli, command: &str, dir: &Path) -> Result<(PosteriorDraws, crate::draws::DrawContext, RunManifest)> {
    let (draws, ctx) = read_draws(dir)?;
    let cfg = load_config(cli)?;
    let mut m = new_manifest(cli, command, &cfg, 1)?;
    m.seed = ctx.summary_seed;
    add_draw_inputs(&mut m, dir)?;
    Ok((draws, ctx, m))
}

pub fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let (draws, ctx, mut m) = draws_for(cli, "predict", &a.draws)?;
    let alpha = a.alpha.unwrap_or(ctx.alpha);
    let mut sw = Stopwatch::start();
    let summaries = if a.items.is_empty() {
        predict_curves(&draws, alpha, ctx.summary_seed)?
    } else {
        a.items.iter().map(|id| predict_item(&draws, id, alpha, ctx.summary_seed)).collect::<Result<Vec<_>, _>>()?
    };
    sw.lap(&mut m, "predict");
    match optional_out(cli)? {
        Some(out) => {
            write_summaries(&out.join("summaries.json"), &summaries)?;
            if a.plot_data {
                let dir = out.join("plots");
                fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
                for s in &summaries {
                    write_plot_data(&dir.join(format!("{}.csv", s.item_id)), s)?;
                }
            }
            m.add_outputs(out)?;
            m.write(out)?;
        }
        None => print_json(&summaries),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NeighborReport {
    query: String,
    k: usize,
    clipped: bool,
    neighbors: Vec<dosefactor_core::distance::Neighbor>,
}

pub fn cmd_distance(cli: &Cli, a: &DistanceArgs) -> Result<()> {
    let (draws, _, mut m) = draws_for(cli, "distance", &a.draws)?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::Usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let mode = match a.weights {
        WeightArg::TauWeighted => WeightMode::TauWeighted,
        WeightArg::Unweighted => WeightMode::Unweighted,
    };
    let subset = (!a.items.is_empty()).then_some(a.items.as_slice());
    let dm = pairwise_distance(&draws, mode, subset, Some(a.level))?;
    let query = match &a.query {
        Some(q) => {
            let (nb, clipped) = neighbors(&dm, q, a.k)?;
            if clipped {
                eprintln!("warning: only {} other items, k clipped", nb.len());
            }
            Some(NeighborReport { query: q.clone(), k: a.k, clipped, neighbors: nb })
        }
        None => None,
    };
    let design = match a.design {
        Some(d) => {
            let mode = match d {
                DesignArg::FillIn => DesignMode::FillIn,
                DesignArg::VentureOut => DesignMode::VentureOut,
            };
            let split = |hold: bool| -> Vec<String> {
                dm.items.iter().filter(|id| draws.item_index(id).map(|i| draws.holdout[i]) == Some(hold)).cloned().collect()
            };
            Some(coverage_design(&dm, &split(false), &split(true), a.pick, mode)?)
        }
        None => None,
    };
    match optional_out(cli)? {
        Some(out) => {
            write_distance(&out.join("distance.csv"), &dm)?;
            if let Some(q) = &query {
                write_json(&out.join("neighbors.json"), q)?;
            }
            if let Some(d) = &design {
                write_json(&out.join("design.json"), d)?;
            }
            m.add_outputs(out)?;
            m.write(out)?;
        }
        None if query.is_none() && design.is_none() => {
            return Err(CliError::Usage("distance needs --out, --query or --design".into()));
        }
        None => {}
    }
    if let Some(q) = &query {
        print_json(q);
    }
    if let Some(d) = &design {
        print_json(d);
    }
    Ok(())
}

pub fn cmd_summarize(cli: &Cli, a: &SummarizeArgs) -> Result<()> {
    let (draws, ctx, mut m) = draws_for(cli, "summarize", &a.draws)?;
    let alpha = a.alpha.unwrap_or(ctx.alpha);
    let comp = component_summaries(&draws, alpha)?;
    let rule = match a.rule {
        RuleArg::MaxLowerBand => PriorityRule::MaxLowerBand,
        RuleArg::ExpectedAc50 => PriorityRule::ExpectedAc50,
        RuleArg::MaxMean => PriorityRule::MaxMean,
        RuleArg::NearestToActives => PriorityRule::NearestToActives,
    };
    let summaries = predict_curves(&draws, alpha, ctx.summary_seed)?;
    let dm = match rule {
        PriorityRule::NearestToActives => Some(pairwise_distance(&draws, WeightMode::TauWeighted, None, None)?),
        _ => None,
    };
    let prio = prioritize(&summaries, alpha, rule, dm.as_ref())?;
    let min_inv_tau = comp.inv_tau_mean.iter().copied().fold(f64::INFINITY, f64::min);
    println!("K adequate: {} (smallest mean 1/tau = {min_inv_tau:.4}; threshold 0.01)", yes_no(comp.k_adequate));
    if let Some(j) = comp.j_adequate {
        let min_inv_omega = comp.inv_omega_mean.iter().copied().fold(f64::INFINITY, f64::min);
        println!("J adequate: {} (smallest mean 1/omega = {min_inv_omega:.4}; threshold 0.01)", yes_no(j));
    }
    println!("{} prioritized items ({})", prio.len(), rule.as_str());
    if let Some(out) = optional_out(cli)? {
        write_json(&out.join("components.json"), &comp)?;
        write_priority(&out.join("priority.csv"), rule, &prio)?;
        m.add_outputs(out)?;
        m.write(out)?;
    }
    Ok(())
}

/// Parse `key=value` settings separated by `,` into a copy of `base`.
pub fn parse_cell(base: &SimSpec, cell: &str) -> Result<SimSpec> {
    let mut spec = base.clone();
    for kv in cell.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) =
            kv.split_once('=').ok_or_else(|| CliError::Usage(format!("grid entry {kv:?} is not key=value")))?;
        let (key, value) = (key.trim(), value.trim());
        let int = || value.parse::<usize>().map_err(|_| CliError::Usage(format!("{key} needs an integer, got {value:?}")));
        let real = || value.parse::<f64>().map_err(|_| CliError::Usage(format!("{key} needs a number, got {value:?}")));
        match key {
            "K" => spec.k_true = int()?,
            "J" => spec.j_true = int()?,
            "N" => spec.n = int()?,
            "D" => spec.d = int()?,
            "S" => spec.s = int()?,
            "S_rel" => spec.s_relevant = int()?,
            "S_irr" => spec.s_irrelevant = int()?,
            "sigma_y" => spec.sigma_y = real()?,
            "sigma_x" => spec.sigma_x = real()?,
            "inactive" => spec.inactive_frac = real()?,
            "holdout" => spec.holdout_frac = real()?,
            "alpha_decay" => spec.alpha_decay = real()?,
            "sparsity" => spec.sparsity = real()?,
            other => return Err(CliError::Usage(format!("unknown grid key {other:?}"))),
        }
    }
    spec.validate().map_err(|e| CliError::Usage(format!("bad grid cell {cell:?}: {e}")))?;
    Ok(spec)
}

pub fn parse_grid(family: SimFamily, grid: &str) -> Result<Vec<SimSpec>> {
    let base = SimSpec { family, ..SimSpec::default() };
    let cells: Vec<&str> = grid.split(';').map(str::trim).filter(|c| !c.is_empty()).collect();
    if cells.is_empty() {
        return Ok(vec![parse_cell(&base, "")?]);
    }
    cells.iter().map(|c| parse_cell(&base, c)).collect()
}

fn sim_family(f: FamilyArg) -> SimFamily {
    match f {
        FamilyArg::Aligned => SimFamily::Aligned,
        FamilyArg::Polynomial => SimFamily::Polynomial,
    }
}

#[derive(Debug, Serialize)]
struct RepRecord {
    rep: usize,
    seed: u64,
    seconds: f64,
    error: Option<String>,
}

pub fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    cfg.validate()?;
    let specs = parse_grid(sim_family(a.family), &a.grid)?;
    if a.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let out = out_dir(cli)?;
    let par = Parallel::new(cli.threads)?;
    let mut m = new_manifest(cli, "simulate", &cfg, par.threads())?;
    let mut sw = Stopwatch::start();
    let master = cfg.mcmc.seed;
    let hp = cfg.hyperparams();
    let jobs: Vec<(usize, usize)> = (0..specs.len()).flat_map(|c| (0..a.reps).map(move |r| (c, r))).collect();
    let results = par.map(&jobs, |&(c, r)| {
        let t = Instant::now();
        let res = run_cell(&specs[c], &hp, &cfg.mcmc, cell_seed(master, c, r), None).map(|(metrics, _, _)| metrics);
        (res, t.elapsed().as_secs_f64())
    });
    sw.lap(&mut m, "replicates");

    let mut rows = Vec::new();
    let mut per_cell: BTreeMap<usize, Vec<RepRecord>> = BTreeMap::new();
    let mut first_failure = None;
    for (&(c, r), (res, seconds)) in jobs.iter().zip(results) {
        let seed = cell_seed(master, c, r);
        let error = match res {
            Ok(metrics) => {
                rows.extend(metric_rows(&specs[c], r, &metrics));
                None
            }
            Err(e) => {
                eprintln!("warning: cell {c} replicate {r} failed: {e}");
                let msg = e.to_string();
                first_failure.get_or_insert(e);
                Some(msg)
            }
        };
        per_cell.entry(c).or_default().push(RepRecord { rep: r, seed, seconds, error });
    }
    write_simstudy(&out.join("simstudy.csv"), &rows)?;
    let summary = summarize_study(&rows);
    write_study_summary(&out.join("simstudy_summary.csv"), &summary)?;
    for (c, spec) in specs.iter().enumerate() {
        let dir = out.join("cells").join(format!("cell_{c}"));
        fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
        let mut cm = new_manifest(cli, "simulate-cell", &cfg, 1)?;
        cm.report("spec", spec);
        cm.report("replicates", &per_cell[&c]);
        if a.write_data {
            for r in 0..a.reps {
                let (ds, _) = generate(spec, cell_seed(master, c, r))?;
                write_dataset(&dir.join(format!("rep_{r}")), &ds)?;
            }
        }
        cm.add_outputs(&dir)?;
        cm.write(&dir)?;
    }
    sw.lap(&mut m, "write");
    m.report("grid", &specs);
    m.add_outputs(out)?;
    m.write(out)?;
    for c in &summary {
        println!("{} K={} J={} S_rel={} S_irr={} {:<16} mean {:.4} [{:.4}, {:.4}] n={}", c.family.as_str(), c.k, c.j, c.s_rel, c.s_irr, c.metric, c.mean, c.q025, c.q975, c.n);
    }
    match first_failure {
        Some(e) if rows.is_empty() => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn cmd_generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let seed = cfg.mcmc.seed;
    let out = out_dir(cli)?;
    let mut m = new_manifest(cli, "generate", &cfg, 1)?;
    let (ds, truth_curves) = match a.family {
        GenerateFamily::ToxcastLike => {
            if !a.grid.trim().is_empty() {
                return Err(CliError::Usage("the toxcast-like fixture takes no --grid".into()));
            }
            let spec = ToxcastLikeSpec::default();
            m.report("spec", &spec);
            gen_toxcast_like(&spec, seed)?
        }
        GenerateFamily::Aligned | GenerateFamily::Polynomial => {
            let family = if a.family == GenerateFamily::Aligned { SimFamily::Aligned } else { SimFamily::Polynomial };
            let specs = parse_grid(family, &a.grid)?;
            if specs.len() != 1 {
                return Err(CliError::Usage("generate takes a single grid cell".into()));
            }
            m.report("spec", &specs[0]);
            let (ds, truth) = generate(&specs[0], seed)?;
            (ds, truth.mean_curves)
        }
    };
    write_dataset(out, &ds)?;
    let path = out.join("truth_curves.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::output(&path, e.into()))?;
    let fail = |e: csv::Error| CliError::output(&path, e.into());
    w.write_record(["item_id", "dose", "mean"]).map_err(fail)?;
    for (i, id) in ds.items.iter().enumerate() {
        for (r, dose) in ds.doses.iter().enumerate() {
            w.write_record([id.clone(), dose.to_string(), truth_curves[(r, i)].to_string()]).map_err(fail)?;
        }
    }
    w.flush().map_err(|e| CliError::output(&path, e))?;
    m.add_outputs(out)?;
    m.write(out)?;
    println!("generated {} items, {} features, {} doses", ds.n_items(), ds.n_features(), ds.n_doses());
    Ok(())
}
