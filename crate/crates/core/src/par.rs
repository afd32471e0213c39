//! Frame-level execution: rayon when the `parallel` feature is on, a plain
//! loop otherwise. Results are merged with a commutative, associative
//! operation, so the partition of frames never changes the outcome.

#[cfg(feature = "parallel")]
use crate::error::Error;
use crate::error::Result;

/// How frames are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Frames in index order on the calling thread.
    Sequential,
    /// Frames spread over a rayon pool; `None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { workers: Option<usize> },
    /// Parallel when compiled with the `parallel` feature.
    #[default]
    Auto,
}

impl Execution {
    /// Execution for a requested worker count: one worker means sequential.
    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Execution::Sequential,
            #[cfg(feature = "parallel")]
            w => Execution::Parallel { workers: w },
            #[cfg(not(feature = "parallel"))]
            _ => Execution::Sequential,
        }
    }
}

/// Results that can be combined across frames.
pub trait Merge: Send {
    fn merge(self, other: Self) -> Self;
}

/// Maps every frame index in `0..frames` through `job` and merges the results
/// into `identity()`.
pub fn map_merge<T, F, I>(execution: Execution, frames: u64, identity: I, job: F) -> Result<T>
where
    T: Merge,
    I: Fn() -> T + Sync + Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    match execution {
        Execution::Sequential => sequential(frames, identity, job),
        #[cfg(feature = "parallel")]
        Execution::Parallel { workers } => parallel(workers, frames, identity, job),
        #[cfg(feature = "parallel")]
        Execution::Auto => parallel(None, frames, identity, job),
        #[cfg(not(feature = "parallel"))]
        Execution::Auto => sequential(frames, identity, job),
    }
}

fn sequential<T, F, I>(frames: u64, identity: I, job: F) -> Result<T>
where
    T: Merge,
    I: Fn() -> T,
    F: Fn(u64) -> Result<T>,
{
    (0..frames).try_fold(identity(), |acc, f| Ok(acc.merge(job(f)?)))
}

#[cfg(feature = "parallel")]
fn parallel<T, F, I>(workers: Option<usize>, frames: u64, identity: I, job: F) -> Result<T>
where
    T: Merge,
    I: Fn() -> T + Sync + Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;

    let run = || {
        (0..frames)
            .into_par_iter()
            .map(&job)
            .try_reduce(&identity, |a, b| Ok(a.merge(b)))
    };
    match workers {
        None => run(),
        Some(0) => Err(Error::Config("worker count must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(run),
    }
}
