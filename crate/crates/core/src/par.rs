//! Deterministic data-parallel primitives.
//!
//! Work is cut into fixed-size chunks whose boundaries do not depend on the
//! number of workers. Each chunk is reduced sequentially and chunk partials are
//! combined by pairwise summation in index order, so results are bit-identical
//! with or without the `parallel` feature and for any pool size.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per reduction chunk.
pub const CHUNK: usize = 2048;

fn chunk_ranges(len: usize) -> Vec<(usize, usize)> {
    (0..len.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(len)))
        .collect()
}

/// Pairwise sum of a slice in index order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let h = n / 2;
            pairwise_sum(&v[..h]) + pairwise_sum(&v[h..])
        }
    }
}

fn pairwise_sum_rows(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    match rows.len() {
        0 => vec![0.0; width],
        1 => rows[0].clone(),
        n => {
            let h = n / 2;
            let mut a = pairwise_sum_rows(&rows[..h], width);
            let b = pairwise_sum_rows(&rows[h..], width);
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        }
    }
}

/// Maps every index through `f`, preserving order.
pub fn map<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Deterministic sum of `f(i)` for `i < len`.
pub fn sum<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials = map_chunks(len, |lo, hi| {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    });
    pairwise_sum(&partials)
}

/// Deterministic vector-valued sum; `f(i, acc)` adds item `i` into `acc`.
pub fn sum_vec<F>(len: usize, width: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let partials = map_chunks(len, |lo, hi| {
        let mut acc = vec![0.0; width];
        for i in lo..hi {
            f(i, &mut acc);
        }
        acc
    });
    pairwise_sum_rows(&partials, width)
}

/// Deterministic maximum of `f(i)`; returns `-inf` for an empty range.
pub fn max<F>(len: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_chunks(len, |lo, hi| (lo..hi).map(&f).fold(f64::NEG_INFINITY, f64::max))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn map_chunks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let ranges = chunk_ranges(len);
    #[cfg(feature = "parallel")]
    {
        ranges.into_par_iter().map(|(lo, hi)| f(lo, hi)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ranges.into_iter().map(|(lo, hi)| f(lo, hi)).collect()
    }
}

/// Applies `f(i, &mut out[i])` to every element.
pub fn for_each_mut<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
    }
}

/// Deterministic dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum(a.len(), |i| a[i] * b[i])
}
