//! Execution-mode switch for the data-parallel batch loops (trajectory
//! generation, rollout evaluation). Every output slot is computed
//! independently, so the parallel and sequential paths produce bit-identical
//! results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How batch work is mapped over items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    /// Rayon work-stealing over items.
    #[cfg(feature = "parallel")]
    #[cfg_attr(feature = "parallel", default)]
    Rayon,
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<R, F>(par: Parallelism, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match par {
        Parallelism::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Parallelism::Rayon => (0..n).into_par_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_map_preserves_order() {
        let out = map_indexed(Parallelism::Sequential, 5, |i| i * i);
        assert_eq!(out, vec![0, 1, 4, 9, 16]);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn rayon_map_matches_sequential() {
        let seq = map_indexed(Parallelism::Sequential, 100, |i| (i as f64).sin());
        let par = map_indexed(Parallelism::Rayon, 100, |i| (i as f64).sin());
        assert_eq!(seq, par);
    }
}
