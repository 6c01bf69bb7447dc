//! Execution mode for the data-parallel inner loops.
//!
//! Every hot loop in the crate goes through [`Exec`]. With the `parallel`
//! feature enabled, [`Exec::Parallel`] dispatches to rayon; without it, both
//! variants run sequentially. Results never depend on the mode: maps keep
//! index order and every floating-point reduction is done on the collected
//! values with a fixed split tree ([`tree_sum`]).

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work is actually dispatched to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `(0..n).map(f).collect()`, in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(i, &mut out[i])` for every element.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
            return;
        }
        out.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }

    /// Calls `f(k, chunk)` on consecutive chunks of length `chunk` (last may be shorter).
    pub fn chunks_mut<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk = chunk.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
            return;
        }
        out.chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
    }

    /// Deterministic sum of `f(i)` over `0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        tree_sum(&self.map(n, f))
    }

    /// Maximum of `f(i)` over `0..n` (`-inf` when empty).
    pub fn max<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map(n, f).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Pairwise summation with split points fixed by the slice length.
pub fn tree_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    tree_sum(&xs[..mid]) + tree_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let a = Exec::Sequential.sum(10_000, f);
        let b = Exec::Parallel.sum(10_000, f);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(Exec::Sequential.map(100, |i| i * i), Exec::Parallel.map(100, |i| i * i));
    }

    #[test]
    fn tree_sum_small_and_empty() {
        assert_eq!(tree_sum(&[]), 0.0);
        assert_eq!(tree_sum(&[1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn chunked_fill() {
        let mut v = vec![0usize; 10];
        Exec::Parallel.chunks_mut(&mut v, 3, |k, c| c.iter_mut().for_each(|x| *x = k));
        assert_eq!(v, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }
}
