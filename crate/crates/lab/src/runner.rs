//! Worker pools. Pulse ranges are cut into fixed chunks that do not depend
//! on the worker count, and partial results are merged in chunk order, so
//! any pool size gives the same output.

use std::ops::Range;

use b92_core::channel::AttackModel;
use b92_core::montecarlo::{merge_gedanken, run_gedanken_oracle, GedankenTally, ProtocolParams, TallySheet, Trial};
use b92_core::protocol_states::Angle;
use rayon::prelude::*;

use crate::Result;

/// Pulses per work item.
pub const CHUNK: u64 = 1 << 16;

pub fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?)
}

fn chunks(n: u64) -> Vec<Range<u64>> {
    (0..n.div_ceil(CHUNK))
        .map(|k| k * CHUNK..((k + 1) * CHUNK).min(n))
        .collect()
}

pub fn run_trial_parallel(params: &ProtocolParams, model: &AttackModel, workers: usize) -> Result<TallySheet> {
    let trial = Trial::new(*params, *model)?;
    let parts: Vec<_> = pool(workers)?.install(|| {
        chunks(params.n_total)
            .into_par_iter()
            .map(|r| trial.simulate_range(r))
            .collect()
    });
    let mut it = parts.into_iter();
    let mut merged = it.next().unwrap_or_else(|| trial.simulate_range(0..0));
    for p in it {
        merged.merge(p);
    }
    Ok(trial.finish(merged))
}

pub fn run_gedanken_parallel(
    a: Angle,
    model: &AttackModel,
    pairs: u64,
    seed: u64,
    workers: usize,
) -> Result<GedankenTally> {
    let parts: Vec<GedankenTally> = pool(workers)?.install(|| {
        chunks(pairs)
            .into_par_iter()
            .map(|r| run_gedanken_oracle(a, model, r, seed))
            .collect::<b92_core::Result<_>>()
    })?;
    Ok(merge_gedanken(&parts))
}

/// Applies `f` to every item on the pool; results keep the input order.
pub fn map_ordered<T, U, F>(items: Vec<T>, workers: usize, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U> + Sync + Send,
{
    pool(workers)?.install(|| items.into_par_iter().map(f).collect())
}
