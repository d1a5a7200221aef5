//! Execution policy for the data-parallel inner loops.
//!
//! Work is always split into the same fixed-size chunks, and chunk results are
//! combined in chunk order, so sequential and parallel execution produce
//! bit-identical floating-point results regardless of the thread count.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items handled by one unit of work.
pub const DEFAULT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs sequentially.
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn chunk_ranges(len: usize, chunk: usize) -> impl Iterator<Item = Range<usize>> + Clone {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk)).map(move |c| c * chunk..((c + 1) * chunk).min(len))
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Maps `f` over consecutive ranges of `0..len` and returns results in range order.
    pub fn map_chunks<T, F>(self, len: usize, chunk: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(Range<usize>) -> T + Sync + Send,
    {
        let ranges: Vec<Range<usize>> = chunk_ranges(len, chunk).collect();
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return ranges.into_par_iter().map(f).collect();
        }
        ranges.into_iter().map(f).collect()
    }

    /// Calls `f(first_item, chunk)` on disjoint mutable chunks of `out`, each
    /// holding `chunk_items * stride` elements.
    pub fn for_each_chunk_mut<F>(self, out: &mut [f64], stride: usize, chunk_items: usize, f: F)
    where
        F: Fn(usize, &mut [f64]) + Sync + Send,
    {
        let step = (chunk_items.max(1) * stride).max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_chunks_mut(step)
                .enumerate()
                .for_each(|(c, block)| f(c * chunk_items.max(1), block));
            return;
        }
        out.chunks_mut(step)
            .enumerate()
            .for_each(|(c, block)| f(c * chunk_items.max(1), block));
    }

    /// Sums per-chunk vectors of length `width` in chunk order.
    pub fn sum_chunks<F>(self, len: usize, chunk: usize, width: usize, f: F) -> Vec<f64>
    where
        F: Fn(Range<usize>, &mut [f64]) + Sync + Send,
    {
        let partials = self.map_chunks(len, chunk, |range| {
            let mut acc = vec![0.0; width];
            f(range, &mut acc);
            acc
        });
        let mut total = vec![0.0; width];
        for part in partials {
            for (t, p) in total.iter_mut().zip(&part) {
                *t += p;
            }
        }
        total
    }
}

/// Caps the global rayon pool; a no-op without the `parallel` feature.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        // The pool can only be built once per process; later calls keep the first setting.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_sums_match_between_policies() {
        let data: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let run = |exec: Execution| {
            exec.sum_chunks(data.len(), 37, 2, |r, acc| {
                for i in r {
                    acc[0] += data[i];
                    acc[1] += data[i] * data[i];
                }
            })
        };
        let a = run(Execution::Sequential);
        let b = run(Execution::Parallel);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn chunk_ranges_cover_everything() {
        let r: Vec<_> = chunk_ranges(10, 4).collect();
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert_eq!(chunk_ranges(0, 4).count(), 0);
    }
}
