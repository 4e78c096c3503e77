//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the chunk maps below run on the current rayon
//! pool. Without it (or with [`Exec::Sequential`]) they run in order on the
//! calling thread. Results are always returned in chunk order, so callers
//! that reduce sequentially get bit-identical answers in both modes.

/// Draws per sampling chunk. Each chunk owns one random stream.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn from_threads(threads: usize) -> Self {
        if threads <= 1 {
            Exec::Sequential
        } else {
            Exec::Parallel
        }
    }
}

/// Splits `n` items into `CHUNK`-sized ranges.
pub fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect()
}

/// Maps `f(chunk_index, range)` over the chunks of `0..n`.
pub fn map_chunks<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, std::ops::Range<usize>) -> T + Sync + Send,
{
    let ranges = chunk_ranges(n);
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            ranges
                .into_par_iter()
                .enumerate()
                .map(|(i, r)| f(i, r))
                .collect()
        }
        _ => ranges.into_iter().enumerate().map(|(i, r)| f(i, r)).collect(),
    }
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<S, T, F>(exec: Exec, items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Runs `f` inside a pool capped at `threads` workers (no-op without the
/// `parallel` feature).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(f);
            }
        }
    }
    let _ = threads;
    f()
}
