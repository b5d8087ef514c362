//! Data-parallel helpers.
//!
//! With the `parallel` feature, [`map_indexed`] fans work out over the rayon
//! pool; without it everything runs on the calling thread. Each task writes
//! its own slot of the output vector and reductions happen afterwards in
//! index order, so both paths produce bit-identical results.

/// Evaluates `f(0..n)` and collects the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Splits `0..n` into contiguous `(start, end)` ranges of at most `chunk` items.
pub fn chunks(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| (c * chunk, ((c + 1) * chunk).min(n)))
        .collect()
}

/// Sizes the global worker pool. Must run before any parallel work; later
/// calls are rejected. A no-op without the `parallel` feature.
pub fn init_threads(threads: usize) -> crate::Result<()> {
    if threads == 0 {
        return Err(crate::Error::BadConfig(
            "worker count must be positive".into(),
        ));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::Error::BadConfig(format!("worker pool: {e}")))?;
    Ok(())
}

/// Whether the crate was built with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range() {
        assert_eq!(chunks(5, 2), vec![(0, 2), (2, 4), (4, 5)]);
        assert!(chunks(0, 3).is_empty());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = map_indexed(1000, f);
        let b = map_indexed_seq(1000, f);
        assert_eq!(a, b);
    }
}
