//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the map runs on rayon's pool; without
//! it the same closure runs in order on the calling thread. Output order is the
//! input order in both cases, so results are bitwise identical.

/// Map `f` over `items`, in parallel when the `parallel` feature is enabled.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Map `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn par_range_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Strictly sequential map, used as the reference path in determinism checks
/// and benchmarks.
pub fn seq_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Run `op` with sweep concurrency capped at `threads` workers.
///
/// `threads == 0` means "no cap". In a sequential build the cap is irrelevant
/// and `op` simply runs on the current thread.
pub fn with_thread_cap<R, F>(threads: usize, op: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(op);
            }
        }
        op()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}

/// Thread cap requested through the `NLSLAB_THREADS` environment variable
/// (0 when unset or unparsable).
pub fn env_thread_cap() -> usize {
    std::env::var("NLSLAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_maps_agree() {
        let xs: Vec<f64> = (0..257).map(|i| i as f64 * 0.37).collect();
        let a = par_map(&xs, |x| x.sin() * x.exp().ln_1p());
        let b = seq_map(&xs, |x| x.sin() * x.exp().ln_1p());
        assert_eq!(a, b);
        let c = par_range_map(xs.len(), |i| xs[i].sin() * xs[i].exp().ln_1p());
        assert_eq!(a, c);
    }

    #[test]
    fn thread_cap_runs_closure() {
        let v = with_thread_cap(2, || par_range_map(10, |i| i * i));
        assert_eq!(v[9], 81);
    }
}
