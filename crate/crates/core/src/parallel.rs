//! Bounded fan-out helpers.
//!
//! With the `parallel` feature (default) work runs on a rayon pool capped at
//! the requested width; without it everything runs on the calling thread.
//! Output order always follows input order.

/// Map on the calling thread.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Map with at most `cap` items in flight.
#[cfg(feature = "parallel")]
pub fn map_bounded<T, R, F>(cap: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if cap <= 1 || items.len() <= 1 {
        return map_sequential(items, f);
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(cap.min(items.len()))
        .build()
    {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running sequentially");
            map_sequential(items, f)
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_bounded<T, R, F>(_cap: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

/// Data-parallel map on the global pool, for CPU-bound inner loops.
#[cfg(feature = "parallel")]
pub fn map_cpu<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_cpu<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map_sequential(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u32> = (0..100).collect();
        let seq = map_sequential(&items, |x| x * 3);
        assert_eq!(map_bounded(4, &items, |x| x * 3), seq);
        assert_eq!(map_bounded(1, &items, |x| x * 3), seq);
        assert_eq!(map_cpu(&items, |x| x * 3), seq);
    }

    #[test]
    fn empty_input() {
        let items: Vec<u32> = Vec::new();
        assert!(map_bounded(8, &items, |x| *x).is_empty());
    }
}
