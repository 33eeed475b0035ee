//! Data-parallel building blocks with a sequential fallback.
//!
//! Built with the `parallel` feature (default) these dispatch to rayon;
//! without it they run plain sequential loops. Work is always split into
//! chunks whose boundaries depend only on the input shape, never on the
//! number of worker threads, and reductions combine per-chunk partials in
//! chunk order, so results are bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length used for flat reductions.
pub(crate) const SLAB: usize = 1 << 14;

/// Run `f(chunk_index, chunk)` over fixed-size chunks of `data`.
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    debug_assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Map `f` over `0..n`, returning results in index order.
pub(crate) fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
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

/// Sum per-slab partials of `f` over `0..len` in slab order.
///
/// `f` receives a half-open index range and returns its partial sums as a
/// small fixed-size array; the fold over slabs is sequential and ordered.
pub(crate) fn slab_sums<const N: usize, F>(len: usize, f: F) -> [f64; N]
where
    F: Fn(std::ops::Range<usize>) -> [f64; N] + Sync + Send,
{
    let n_slabs = len.div_ceil(SLAB);
    let partials = map_indexed(n_slabs, |s| {
        let lo = s * SLAB;
        let hi = (lo + SLAB).min(len);
        f(lo..hi)
    });
    let mut total = [0.0f64; N];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total
}
