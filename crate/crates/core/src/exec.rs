//! Replicate scheduling. Runs are independent, so they are spread over a
//! rayon pool when the `parallel` feature is on; otherwise, or when asked
//! for, they run one after another. Results always come back in job order.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

impl Execution {
    /// Whether jobs will actually run concurrently in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map_jobs<J, T, F>(exec: Execution, jobs: Vec<J>, f: F) -> Vec<T>
where
    J: Send,
    T: Send,
    F: Fn(J) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return jobs.into_par_iter().map(&f).collect();
    }
    let _ = exec;
    jobs.into_iter().map(f).collect()
}
