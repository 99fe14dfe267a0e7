//! Deterministic chunked execution.
//!
//! Batch loops run as fixed chunks of paths; per-chunk results are folded in
//! chunk order by the caller. The outcome is therefore bit-identical for any
//! worker count, including the serial no_std build.

use alloc::vec::Vec;
use core::ops::Range;

/// Chunk size for batch loops. Small enough to balance a handful of workers
/// at M = 500, large enough to keep scheduling overhead negligible.
pub const CHUNK: usize = 64;

pub fn chunk_ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(len.div_ceil(chunk));
    let mut lo = 0;
    while lo < len {
        let hi = (lo + chunk).min(len);
        out.push(lo..hi);
        lo = hi;
    }
    out
}

/// Applies `work` to every chunk of `0..len` and returns results in chunk
/// order. Runs on the rayon pool under std, serially otherwise.
#[cfg(feature = "std")]
pub fn run<T, F>(len: usize, chunk: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync + Send,
{
    use rayon::prelude::*;
    chunk_ranges(len, chunk)
        .into_par_iter()
        .map(work)
        .collect()
}

#[cfg(not(feature = "std"))]
pub fn run<T, F>(len: usize, chunk: usize, work: F) -> Vec<T>
where
    F: Fn(Range<usize>) -> T,
{
    chunk_ranges(len, chunk).into_iter().map(work).collect()
}
