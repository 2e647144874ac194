//! Fan-out for independent jobs (seeds, folds, grid points) and batch
//! evaluation. With the `parallel` feature the work spreads across the
//! rayon pool; otherwise it runs sequentially. Each job owns its state and
//! outputs are collected in job order, so results are identical either way.

#[cfg(feature = "parallel")]
pub fn run_jobs<T, U, F>(jobs: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    jobs.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn run_jobs<T, U, F>(jobs: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    jobs.into_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_job_order() {
        let out = run_jobs((0..100).collect(), |i: usize| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }
}
