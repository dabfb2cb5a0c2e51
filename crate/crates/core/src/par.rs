//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run as plain loops. Reductions always use fixed-size chunks summed in
//! chunk order, so results are bit-identical whatever the worker count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for deterministic reductions.
pub const REDUCE_CHUNK: usize = 1024;

/// Below this many items work stays on the calling thread.
pub const PAR_MIN_LEN: usize = 4096;

#[cfg(feature = "parallel")]
fn go_parallel(n: usize) -> bool {
    n >= PAR_MIN_LEN && rayon::current_num_threads() > 1
}

/// Writes `f(i)` into `out[i]` for every index.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(out.len()) {
        out.par_iter_mut()
            .with_min_len(REDUCE_CHUNK)
            .enumerate()
            .for_each(|(i, o)| *o = f(i));
        return;
    }
    out.iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
}

/// Builds a vector of length `n` from `f(i)`.
pub fn collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(n) {
        return (0..n)
            .into_par_iter()
            .with_min_len(REDUCE_CHUNK)
            .map(f)
            .collect();
    }
    (0..n).map(f).collect()
}

/// Applies `f` to every element of `items` in place.
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(items.len()) {
        items
            .par_iter_mut()
            .with_min_len(REDUCE_CHUNK)
            .enumerate()
            .for_each(|(i, x)| f(i, x));
        return;
    }
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Per-chunk partial results of `g(lo..hi)` in chunk order.
fn chunk_partials<G>(n: usize, g: G) -> Vec<f64>
where
    G: Fn(std::ops::Range<usize>) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(REDUCE_CHUNK);
    let range = |c: usize| c * REDUCE_CHUNK..((c + 1) * REDUCE_CHUNK).min(n);
    #[cfg(feature = "parallel")]
    if go_parallel(n) {
        return (0..chunks).into_par_iter().map(|c| g(range(c))).collect();
    }
    (0..chunks).map(|c| g(range(c))).collect()
}

/// Applies `f(k, chunk)` to consecutive `chunk`-length pieces of `items`.
pub fn for_each_chunk_mut<T, F>(items: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if go_parallel(items.len()) {
        let min = REDUCE_CHUNK.div_ceil(chunk.max(1));
        items
            .par_chunks_mut(chunk)
            .with_min_len(min)
            .enumerate()
            .for_each(|(k, c)| f(k, c));
        return;
    }
    items
        .chunks_mut(chunk)
        .enumerate()
        .for_each(|(k, c)| f(k, c));
}

/// Deterministic sum of `f(i)` over `0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    pairwise(&chunk_partials(n, |r| r.map(&f).sum::<f64>()))
}

/// Deterministic max of `f(i)` over `0..n` (0 for empty ranges).
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    chunk_partials(n, |r| r.map(&f).fold(0.0_f64, f64::max))
        .into_iter()
        .fold(0.0, f64::max)
}

fn pairwise(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise(l) + pairwise(r)
        }
    }
}

/// Number of workers the current pool will use.
pub fn workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_sequential_order_independent_of_length() {
        for n in [0, 1, 7, 1024, 1025, 5000] {
            let s = sum(n, |i| i as f64);
            assert_eq!(s, (n * n.saturating_sub(1) / 2) as f64);
        }
    }

    #[test]
    fn max_of_empty_is_zero() {
        assert_eq!(max(0, |_| 1.0), 0.0);
        assert_eq!(max(3000, |i| (i % 17) as f64), 16.0);
    }
}
