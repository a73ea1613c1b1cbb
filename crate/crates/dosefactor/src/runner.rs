//! Thread pool for chains and simulation replicates.

use dosefactor_core::data::Dataset;
use dosefactor_core::gibbs::{run_chain, ChainConfig, PosteriorDraws};
use dosefactor_core::model::Hyperparams;
use rayon::prelude::*;

use crate::error::{CliError, Result};

pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    /// `None` uses every available core.
    pub fn new(threads: Option<usize>) -> Result<Self> {
        let n = match threads {
            Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
            Some(n) => n,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Chains in parallel, merged in chain order, so the result does not
    /// depend on the thread count.
    pub fn run_chains(&self, ds: &Dataset, hp: &Hyperparams, cc: &ChainConfig) -> dosefactor_core::Result<PosteriorDraws> {
        let parts = self.pool.install(|| {
            (0..cc.n_chains).into_par_iter().map(|c| run_chain(ds, hp, cc, c)).collect::<dosefactor_core::Result<Vec<_>>>()
        })?;
        PosteriorDraws::merge(parts)
    }

    /// Order-preserving parallel map.
    pub fn map<T: Sync, R: Send>(&self, jobs: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| jobs.par_iter().map(&f).collect())
    }
}
