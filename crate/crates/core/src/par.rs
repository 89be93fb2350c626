//! Deterministic data-parallel helpers.
//!
//! Every parallel construct in this crate goes through one of these
//! functions. Work is split along a fixed chunking that does not depend on
//! the thread count, partial results are combined sequentially in index
//! order, and the sequential fallback walks the identical chunks, so a given
//! input produces bit-identical output with the `parallel` feature on or
//! off, on any machine.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used by [`sum_chunked`] and friends. Recorded in pipeline
/// reports so output provenance pins the reduction order.
pub const REDUCE_CHUNK: usize = 8192;

/// Apply `f` to each row of a row-major buffer.
pub fn for_each_row_mut<F>(values: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        for_each_row_mut_par(values, row_len, f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        for_each_row_mut_seq(values, row_len, f);
    }
}

pub fn for_each_row_mut_seq<F>(values: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    assert!(row_len > 0 && values.len() % row_len == 0);
    for (iy, row) in values.chunks_mut(row_len).enumerate() {
        f(iy, row);
    }
}

#[cfg(feature = "parallel")]
pub fn for_each_row_mut_par<F>(values: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    assert!(row_len > 0 && values.len() % row_len == 0);
    values
        .par_chunks_mut(row_len)
        .enumerate()
        .for_each(|(iy, row)| f(iy, row));
}

/// Build a vector whose `i`-th entry is `f(i)`, preserving index order.
pub fn collect_vec<T, F>(n: usize, f: F) -> Vec<T>
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

pub fn collect_vec_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sum `f(start, end)` over the fixed [`REDUCE_CHUNK`] partition of `0..n`,
/// adding partials in chunk order. `f` must itself reduce its range in
/// index order for full determinism (a plain loop does).
pub fn sum_chunked<F>(n: usize, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let ranges: Vec<(usize, usize)> = (0..n)
        .step_by(REDUCE_CHUNK)
        .map(|s| (s, (s + REDUCE_CHUNK).min(n)))
        .collect();
    let partials: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            ranges.par_iter().map(|&(s, e)| f(s, e)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            ranges.iter().map(|&(s, e)| f(s, e)).collect()
        }
    };
    partials.iter().sum()
}

/// Dot product with the fixed chunked reduction.
pub fn dot_chunked(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    sum_chunked(a.len(), |s, e| {
        let mut acc = 0.0;
        for i in s..e {
            acc += a[i] * b[i];
        }
        acc
    })
}

/// Weighted dot product `sum a_i b_i w_i` with the fixed chunked reduction.
pub fn dot3_chunked(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert_eq!(a.len(), w.len());
    sum_chunked(a.len(), |s, e| {
        let mut acc = 0.0;
        for i in s..e {
            acc += a[i] * b[i] * w[i];
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_sequential_loop() {
        let v: Vec<f64> = (0..100_000).map(|i| (i as f64).sin()).collect();
        let chunked = sum_chunked(v.len(), |s, e| v[s..e].iter().sum());
        // Reference: same chunking applied by hand, sequentially.
        let mut expect = 0.0;
        for c in v.chunks(REDUCE_CHUNK) {
            let part: f64 = c.iter().sum();
            expect += part;
        }
        assert_eq!(chunked, expect, "reduction must be bit-deterministic");
    }

    #[test]
    fn row_walker_variants_agree_bitwise() {
        let n = 37;
        let mut a: Vec<f64> = (0..n * n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let mut b = a.clone();
        let touch = |iy: usize, row: &mut [f64]| {
            for (ix, v) in row.iter_mut().enumerate() {
                *v = (*v * 3.0 + iy as f64).sin() + ix as f64 * 1e-3;
            }
        };
        for_each_row_mut_seq(&mut a, n, touch);
        for_each_row_mut(&mut b, n, touch);
        assert_eq!(a, b);
    }

    #[test]
    fn dot_chunked_simple() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        assert_eq!(dot_chunked(&a, &b), 32.0);
        assert_eq!(dot3_chunked(&a, &b, &[1.0, 1.0, 2.0]), 4.0 + 10.0 + 36.0);
    }
}
