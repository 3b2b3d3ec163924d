//! Independent runs over many instances.
//!
//! A single LNS run is strictly sequential. Batches of runs are
//! embarrassingly parallel and go through rayon when the `parallel` feature
//! is on; without it the same code runs sequentially, in order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::Error;
use crate::instance::Instance;
use crate::lns::{run, LnsConfig, LnsError, RunStats};
use crate::operators::OperatorPair;
use crate::solution::Solution;

/// Maps `f` over `items`, in parallel when available. Output order always
/// matches input order.
pub fn map_indexed<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Runs `f` inside a pool of `jobs` workers (`0` = rayon's default). Without
/// the `parallel` feature this simply calls `f`.
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if jobs == 0 {
            return f();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        f()
    }
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// One unit of a batch: an instance and the config to run it with.
#[derive(Debug, Clone)]
pub struct Job<'a> {
    pub instance: &'a Instance,
    pub config: LnsConfig,
}

pub type JobResult = Result<(Solution, RunStats), LnsError>;

/// Runs every job with a freshly built operator pair.
pub fn run_batch<F>(jobs: &[Job<'_>], make_ops: F) -> Vec<JobResult>
where
    F: Fn() -> Result<OperatorPair, Error> + Sync + Send,
{
    map_indexed(jobs, |_, job| {
        let ops = make_ops()?;
        run(job.instance, &ops, &job.config)
    })
}

/// Sequential reference for [`run_batch`], always available.
pub fn run_batch_sequential<F>(jobs: &[Job<'_>], make_ops: F) -> Vec<JobResult>
where
    F: Fn() -> Result<OperatorPair, Error>,
{
    jobs.iter()
        .map(|job| {
            let ops = make_ops()?;
            run(job.instance, &ops, &job.config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenParams};
    use crate::instance::ProblemKind;

    #[test]
    fn parallel_matches_sequential_in_iteration_mode() {
        let instances: Vec<Instance> = (0..4)
            .map(|s| generate(&GenParams::new(ProblemKind::Cvrp, 30, s)).unwrap())
            .collect();
        let jobs: Vec<Job> = instances
            .iter()
            .enumerate()
            .map(|(i, inst)| Job {
                instance: inst,
                config: LnsConfig::with_iterations(300, i as u64),
            })
            .collect();
        let a = run_batch(&jobs, || Ok(OperatorPair::seed()));
        let b = run_batch_sequential(&jobs, || Ok(OperatorPair::seed()));
        for (x, y) in a.iter().zip(&b) {
            let (sx, _) = x.as_ref().unwrap();
            let (sy, _) = y.as_ref().unwrap();
            assert_eq!(sx.objective().to_bits(), sy.objective().to_bits());
        }
    }

    #[test]
    fn order_is_preserved() {
        let v: Vec<u32> = (0..100).collect();
        let out = map_indexed(&v, |i, x| (i as u32) * 1000 + x);
        assert!(out.iter().enumerate().all(|(i, &y)| y == i as u32 * 1001));
    }
}
