//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the maps run on rayon; without it
//! they degrade to plain loops. Results are collected in input order, so
//! callers that need determinism reduce them with a fixed-order fold and get
//! identical output regardless of worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential reference path. Always available; the benches compare it
/// against [`map_collect`] on the same workloads.
pub fn map_collect_serial<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over an index range, preserving order.
#[cfg(feature = "parallel")]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over an index range, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_indices<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sequential reference path for [`map_indices`].
pub fn map_indices_serial<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// True when the crate was built with the rayon path enabled.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_serial_agree_in_order() {
        let items: Vec<u64> = (0..1000).collect();
        let a = map_collect(&items, |x| x * x + 1);
        let b = map_collect_serial(&items, |x| x * x + 1);
        assert_eq!(a, b);
    }

    #[test]
    fn index_maps_agree() {
        let a = map_indices(257, |i| i as u64 * 3);
        let b = map_indices_serial(257, |i| i as u64 * 3);
        assert_eq!(a, b);
    }
}
