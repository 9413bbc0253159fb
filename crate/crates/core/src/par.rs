//! Fixed-partition data parallelism.
//!
//! Work is split into chunks whose boundaries depend only on the problem size
//! and the chunk length, never on the worker count. Per-chunk results are
//! collected in chunk order and any reduction happens sequentially over that
//! order, so outputs are bitwise identical for any thread count.

use std::ops::Range;

use rayon::prelude::*;

pub const DEFAULT_CHUNK: usize = 64;

pub fn chunk_ranges(n: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect()
}

/// Maps `f` over the fixed chunks of `0..n`, returning results in chunk order.
pub fn map_chunks<T, F>(n: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    chunk_ranges(n, chunk).into_par_iter().map(f).collect()
}

/// Sums equal-length partial vectors in order.
pub fn sum_in_order(partials: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut total = vec![0.0; len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_range_exactly() {
        let r = chunk_ranges(10, 4);
        assert_eq!(r, vec![0..4, 4..8, 8..10]);
        assert!(chunk_ranges(0, 4).is_empty());
    }

    #[test]
    fn reduction_is_thread_count_independent() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e-3 + 1e7).collect();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                let partials = map_chunks(values.len(), 37, |r| vec![values[r].iter().sum::<f64>()]);
                sum_in_order(partials, 1)[0]
            })
        };
        assert_eq!(run(1).to_bits(), run(4).to_bits());
    }
}
