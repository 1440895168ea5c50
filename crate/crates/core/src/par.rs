//! Deterministic parallel reductions. Partial sums are formed over fixed
//! chunks and combined in index order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Minimum items per task for element-wise kernels.
pub const MIN_LEN: usize = 1024;

pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        })
        .collect();
    partial.iter().sum()
}

pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    (0..n).into_par_iter().with_min_len(MIN_LEN).map(|i| f(i)).reduce(|| f64::NEG_INFINITY, f64::max)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum(a.len(), |i| a[i] * b[i])
}

/// Per-item map into a fresh vector.
pub fn map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    (0..n).into_par_iter().with_min_len(MIN_LEN).map(|i| f(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_thread_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (1.0 + i as f64);
        let a = sum(100_000, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sum(100_000, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
