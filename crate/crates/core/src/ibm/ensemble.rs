use rayon::prelude::*;

use super::{simulate_replica, SimConfig, SimError, Trajectory};

/// Runs replicas `0..replicas` in parallel. Results come back in replica
/// order, so the output does not depend on the thread count.
pub fn run_ensemble(
    cfg: &SimConfig,
    replicas: usize,
    threads: Option<usize>,
) -> Result<Vec<Trajectory>, SimError> {
    run_ensemble_with(cfg, replicas, threads, simulate_replica)
}

/// [`run_ensemble`] with an arbitrary per-replica job.
pub fn run_ensemble_with<T, F>(cfg: &SimConfig, replicas: usize, threads: Option<usize>, job: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(&SimConfig, u64) -> Result<T, SimError> + Sync,
{
    let run = || {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| job(cfg, r))
            .collect::<Result<Vec<_>, _>>()
    };
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}
