//! Worker helpers for the compute kernels, on a persistent pool.
//!
//! Work is split into disjoint index ranges so every element is written
//! by exactly one worker with a fixed per-element evaluation order;
//! results are bit-identical for any worker count. `IGKIT_THREADS`
//! caps the pool.

use std::sync::OnceLock;

use rayon::prelude::*;

fn configured_threads() -> usize {
    static N: OnceLock<usize> = OnceLock::new();
    *N.get_or_init(|| {
        if let Ok(v) = std::env::var("IGKIT_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                return n.max(1);
            }
        }
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(configured_threads())
            .thread_name(|i| format!("igkit-worker-{i}"))
            .build()
            .expect("worker pool")
    })
}

pub fn max_threads() -> usize {
    configured_threads()
}

/// Runs `f(start, end)` over a partition of `0..total`.
///
/// Ranges never overlap and cover `0..total`; `min_chunk` bounds how
/// finely the work may be split so small jobs stay on one thread.
pub fn run_partitioned<F>(total: usize, min_chunk: usize, f: F)
where
    F: Fn(usize, usize) + Sync,
{
    if total == 0 {
        return;
    }
    let threads = configured_threads()
        .min(total.div_ceil(min_chunk.max(1)))
        .max(1);
    if threads == 1 {
        f(0, total);
        return;
    }
    let chunk = total.div_ceil(threads);
    pool().install(|| {
        (0..threads).into_par_iter().for_each(|t| {
            let start = t * chunk;
            let end = ((t + 1) * chunk).min(total);
            if start < end {
                f(start, end);
            }
        });
    });
}

/// Splits `out` into row bands of width `row_len` and fills each band
/// on its own worker. `fill(row_range, band)` must write the whole band.
pub fn fill_rows<T, F>(out: &mut [T], row_len: usize, min_rows: usize, fill: F)
where
    T: Send,
    F: Fn(std::ops::Range<usize>, &mut [T]) + Sync,
{
    assert!(row_len > 0 && out.len() % row_len == 0);
    let rows = out.len() / row_len;
    if rows == 0 {
        return;
    }
    let threads = configured_threads()
        .min(rows.div_ceil(min_rows.max(1)))
        .max(1);
    if threads == 1 {
        fill(0..rows, out);
        return;
    }
    let chunk = rows.div_ceil(threads);
    pool().install(|| {
        out.par_chunks_mut(chunk * row_len)
            .enumerate()
            .for_each(|(i, band)| {
                let row0 = i * chunk;
                let row1 = row0 + band.len() / row_len;
                fill(row0..row1, band);
            });
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn partition_covers_everything_once() {
        let hits: Vec<AtomicUsize> = (0..1000).map(|_| AtomicUsize::new(0)).collect();
        run_partitioned(1000, 10, |a, b| {
            for i in a..b {
                hits[i].fetch_add(1, Ordering::Relaxed);
            }
        });
        assert!(hits.iter().all(|h| h.load(Ordering::Relaxed) == 1));
    }

    #[test]
    fn fill_rows_writes_every_row() {
        let mut buf = vec![0u32; 64 * 7];
        fill_rows(&mut buf, 7, 1, |rows, band| {
            for (k, r) in rows.clone().enumerate() {
                for j in 0..7 {
                    band[k * 7 + j] = (r * 7 + j) as u32;
                }
            }
        });
        for (i, v) in buf.iter().enumerate() {
            assert_eq!(*v, i as u32);
        }
    }

    #[test]
    fn nested_calls_do_not_deadlock() {
        let mut outer = vec![0u64; 4 * 100];
        fill_rows(&mut outer, 100, 1, |rows, band| {
            let mut inner = vec![0u64; 2048];
            fill_rows(&mut inner, 1, 64, |r, b| {
                for (i, v) in r.zip(b.iter_mut()) {
                    *v = i as u64;
                }
            });
            let s: u64 = inner.iter().sum();
            for (k, _) in rows.enumerate() {
                band[k * 100] = s;
            }
        });
        assert!(outer.iter().any(|&v| v > 0));
    }
}
