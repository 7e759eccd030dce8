//! Data-parallel map over independent work items.
//!
//! Every parallel site in the crate produces one output slot per index with no
//! cross-item reduction, so the parallel result is bit-identical to the
//! sequential one; the `parallel` feature only changes wall time.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference path, kept unconditionally for benchmarks and for
/// spot-checking that the parallel map is bitwise identical.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_matches_sequential_bitwise() {
        let f = |i: usize| (i as f64).sqrt().sin() * 1e3 + (i as f64) / 7.0;
        let a = map_indexed(1024, f);
        let b = map_indexed_seq(1024, f);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
