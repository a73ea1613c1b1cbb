//! End-to-end fitting pipeline: preprocessing, chains, alignment and
//! summaries.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::align::{align_draws, AlignmentReport};
use crate::data::{preprocess, Dataset, PreprocessOptions, PreprocessReport};
use crate::gibbs::{run_chains, ChainConfig, PosteriorDraws};
use crate::model::Hyperparams;
use crate::posterior::{component_summaries, predict_curves, ComponentSummary, CurveSummary};
use crate::random::derive_seed;
use crate::Result;

/// Runs every chain of a configuration; the std front end swaps in a
/// parallel implementation.
pub type ChainRunner<'a> = &'a (dyn Fn(&Dataset, &Hyperparams, &ChainConfig) -> Result<PosteriorDraws> + Sync);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub preprocess: PreprocessOptions,
    /// Skip preprocessing entirely (data already on the model scale).
    pub raw: bool,
    pub alpha: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { preprocess: PreprocessOptions::default(), raw: false, alpha: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub dataset: Dataset,
    pub report: PreprocessReport,
    pub draws: PosteriorDraws,
    pub alignment: AlignmentReport,
    pub summaries: Vec<CurveSummary>,
    pub components: ComponentSummary,
}

pub fn fit(
    ds: &Dataset,
    opts: &FitOptions,
    hp: &Hyperparams,
    cc: &ChainConfig,
    runner: Option<ChainRunner<'_>>,
) -> Result<FitOutput> {
    let (dataset, report) = if opts.raw {
        (ds.clone(), PreprocessReport { y_scale_factor: ds.y_scale, ..PreprocessReport::default() })
    } else {
        preprocess(ds, &opts.preprocess)?
    };
    let hp = hp.resolved(&dataset.doses);
    let raw = match runner {
        Some(run) => run(&dataset, &hp, cc)?,
        None => run_chains(&dataset, &hp, cc)?,
    };
    let (draws, alignment) = align_draws(&raw)?;
    let summaries = predict_curves(&draws, opts.alpha, derive_seed(cc.seed, u64::MAX))?;
    let components = component_summaries(&draws, opts.alpha)?;
    Ok(FitOutput { dataset, report, draws, alignment, summaries, components })
}
