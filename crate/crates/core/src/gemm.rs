//! Blocked matrix multiplication kernels.
//!
//! Row-major, register-tiled (4 x 16 accumulators), cache-blocked over
//! the reduction and column dimensions, with a fixed accumulation
//! order per output element. Worker partitioning is over disjoint
//! output rows, so results do not depend on the thread count.

use crate::parallel;
use crate::scalar::Scalar;

const MR: usize = 4;
const NR: usize = 16;
// Reduction/column block sizes; the streamed b panel stays ~1 MiB.
const KC: usize = 256;
const NC: usize = 512;
// Jobs below this many flops are not worth a thread handoff.
const PAR_FLOPS: usize = 100_000_000;

/// c[m,n] = a[m,k] * b[k,n]
pub fn matmul_nn<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k, "matmul_nn: a size");
    assert_eq!(b.len(), k * n, "matmul_nn: b size");
    assert_eq!(c.len(), m * n, "matmul_nn: c size");
    let min_rows = min_rows_for(k, n);
    parallel::fill_rows(c, n.max(1), min_rows, |rows, band| {
        matmul_nn_st(band, &a[rows.start * k..rows.end * k], b, rows.len(), k, n);
    });
}

/// Single-threaded [`matmul_nn`]; callers that parallelize at a higher
/// level use this directly.
pub fn matmul_nn_st<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    for jc in (0..n).step_by(NC) {
        let nb = NC.min(n - jc);
        for pc in (0..k).step_by(KC) {
            let kb = KC.min(k - pc);
            let first = pc == 0;
            let mut i = 0;
            while i < m {
                let mh = MR.min(m - i);
                let mut j = jc;
                while j < jc + nb {
                    let nw = NR.min(jc + nb - j);
                    if mh == MR && nw == NR {
                        tile_full(c, |ii, p| a[(i + ii) * k + p], b, i, j, pc, kb, n, first);
                    } else {
                        tile_edge(c, |ii, p| a[(i + ii) * k + p], b, i, j, mh, nw, pc, kb, n, first);
                    }
                    j += NR;
                }
                i += MR;
            }
        }
    }
}

/// One full MR x NR tile of `c (+)= a_panel * b[pc..pc+kb, :]`, with the
/// a element supplied by an index closure so the transposed layout can
/// reuse it. The accumulators stay in registers across the k loop.
#[inline(always)]
fn tile_full<S: Scalar>(
    c: &mut [S],
    a_at: impl Fn(usize, usize) -> S,
    b: &[S],
    i: usize,
    j: usize,
    pc: usize,
    kb: usize,
    n: usize,
    first: bool,
) {
    let mut acc = [[S::ZERO; NR]; MR];
    for p in pc..pc + kb {
        let brow = &b[p * n + j..p * n + j + NR];
        for ii in 0..MR {
            let av = a_at(ii, p);
            let row = &mut acc[ii];
            for jj in 0..NR {
                row[jj] = av.mul_add(brow[jj], row[jj]);
            }
        }
    }
    for ii in 0..MR {
        let dst = &mut c[(i + ii) * n + j..(i + ii) * n + j + NR];
        if first {
            dst.copy_from_slice(&acc[ii]);
        } else {
            for (d, &v) in dst.iter_mut().zip(&acc[ii]) {
                *d = *d + v;
            }
        }
    }
}

#[inline(never)]
fn tile_edge<S: Scalar>(
    c: &mut [S],
    a_at: impl Fn(usize, usize) -> S,
    b: &[S],
    i: usize,
    j: usize,
    mh: usize,
    nw: usize,
    pc: usize,
    kb: usize,
    n: usize,
    first: bool,
) {
    let mut acc = [[S::ZERO; NR]; MR];
    for p in pc..pc + kb {
        let brow = &b[p * n + j..p * n + j + nw];
        for ii in 0..mh {
            let av = a_at(ii, p);
            for jj in 0..nw {
                acc[ii][jj] = av.mul_add(brow[jj], acc[ii][jj]);
            }
        }
    }
    for ii in 0..mh {
        let dst = &mut c[(i + ii) * n + j..(i + ii) * n + j + nw];
        if first {
            dst.copy_from_slice(&acc[ii][..nw]);
        } else {
            for (d, &v) in dst.iter_mut().zip(&acc[ii][..nw]) {
                *d = *d + v;
            }
        }
    }
}

/// c[m,n] = a[m,k] * b[n,k]^T
pub fn matmul_nt<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k, "matmul_nt: a size");
    assert_eq!(b.len(), n * k, "matmul_nt: b size");
    assert_eq!(c.len(), m * n, "matmul_nt: c size");
    let min_rows = min_rows_for(k, n);
    parallel::fill_rows(c, n.max(1), min_rows, |rows, band| {
        matmul_nt_st(band, &a[rows.start * k..rows.end * k], b, rows.len(), k, n);
    });
}

pub fn matmul_nt_st<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    // Block the b rows so the reused panel stays cache resident.
    let jb_rows = (KC * NC / k.max(1)).clamp(MR, 512);
    for jb in (0..n).step_by(jb_rows) {
        let jn = jb_rows.min(n - jb);
        for i in 0..m {
            let arow = &a[i * k..(i + 1) * k];
            for j in jb..jb + jn {
                c[i * n + j] = dot(arow, &b[j * k..(j + 1) * k]);
            }
        }
    }
}

/// Fixed-order 8-lane dot product.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::ZERO; 8];
    let chunks = a.len() / 8;
    for ch in 0..chunks {
        let i = ch * 8;
        let (aa, bb) = (&a[i..i + 8], &b[i..i + 8]);
        for l in 0..8 {
            acc[l] = aa[l].mul_add(bb[l], acc[l]);
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[2] + acc[6])) + ((acc[1] + acc[5]) + (acc[3] + acc[7]));
    for i in chunks * 8..a.len() {
        s = a[i].mul_add(b[i], s);
    }
    s
}

/// c[m,n] = a[k,m]^T * b[k,n]
pub fn matmul_tn<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), k * m, "matmul_tn: a size");
    assert_eq!(b.len(), k * n, "matmul_tn: b size");
    assert_eq!(c.len(), m * n, "matmul_tn: c size");
    let min_rows = min_rows_for(k, n);
    parallel::fill_rows(c, n.max(1), min_rows, |rows, band| {
        tn_band(band, a, b, rows.start, rows.end, m, k, n);
    });
}

fn tn_band<S: Scalar>(
    c: &mut [S],
    a: &[S],
    b: &[S],
    i0: usize,
    i1: usize,
    m: usize,
    k: usize,
    n: usize,
) {
    let rows = i1 - i0;
    for jc in (0..n).step_by(NC) {
        let nb = NC.min(n - jc);
        for pc in (0..k).step_by(KC) {
            let kb = KC.min(k - pc);
            let first = pc == 0;
            let mut i = 0;
            while i < rows {
                let mh = MR.min(rows - i);
                let mut j = jc;
                while j < jc + nb {
                    let nw = NR.min(jc + nb - j);
                    if mh == MR && nw == NR {
                        tile_full(c, |ii, p| a[p * m + i0 + i + ii], b, i, j, pc, kb, n, first);
                    } else {
                        tile_edge(
                            c,
                            |ii, p| a[p * m + i0 + i + ii],
                            b,
                            i,
                            j,
                            mh,
                            nw,
                            pc,
                            kb,
                            n,
                            first,
                        );
                    }
                    j += NR;
                }
                i += MR;
            }
        }
    }
}

fn min_rows_for(k: usize, n: usize) -> usize {
    let flops_per_row = 2 * k.max(1) * n.max(1);
    (PAR_FLOPS / flops_per_row).max(MR)
}

/// dst[cols, rows] = src[rows, cols]^T, in cache-friendly 32x32 blocks.
/// Large matrices split their destination rows across workers.
pub fn transpose<S: Scalar>(dst: &mut [S], src: &[S], rows: usize, cols: usize) {
    assert_eq!(src.len(), rows * cols);
    assert_eq!(dst.len(), rows * cols);
    const B: usize = 32;
    let min_dst_rows = (1usize << 22) / rows.max(1);
    parallel::fill_rows(dst, rows.max(1), min_dst_rows.max(B), |jrange, band| {
        let (j_lo, j_hi) = (jrange.start, jrange.end);
        for i0 in (0..rows).step_by(B) {
            let ih = B.min(rows - i0);
            let mut j0 = j_lo;
            while j0 < j_hi {
                let jw = B.min(j_hi - j0);
                for i in i0..i0 + ih {
                    for j in j0..j0 + jw {
                        band[(j - j_lo) * rows + i] = src[i * cols + j];
                    }
                }
                j0 += B;
            }
        }
    });
}
