//! 2-D convolution (cross-correlation convention, zero padding).
//!
//! Spatial size is preserved: kernels are square with odd side k and
//! padding fixed at (k-1)/2. The inner product is evaluated through
//! an im2col buffer and the blocked GEMM, chunked over output rows to
//! bound the buffer size.

use crate::error::{CoreError, Result};
use crate::gemm;
use crate::parallel;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

// im2col chunk budget, in elements.
const COL_BUDGET: usize = 1 << 21;

fn check_conv_args<S: Scalar>(
    input: &Tensor<S>,
    kernel: &Tensor<S>,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if input.rank() != 4 || kernel.rank() != 4 {
        return Err(CoreError::dims(
            "conv2d",
            format!("input {:?}, kernel {:?}", input.shape(), kernel.shape()),
        ));
    }
    let (n, c_in, h, w) = input.dim4();
    let (c_out, kc, kh, kw) = kernel.dim4();
    if kc != c_in {
        return Err(CoreError::dims(
            "conv2d",
            format!("input has {c_in} channels, kernel expects {kc}"),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(CoreError::invalid(
            "conv2d",
            format!("kernel must be square with odd side, got {kh}x{kw}"),
        ));
    }
    if padding != (kh - 1) / 2 {
        return Err(CoreError::invalid(
            "conv2d",
            format!("padding {padding} does not preserve size for k = {kh}"),
        ));
    }
    Ok((n, c_in, h, w, c_out, kh))
}

/// out(n,o,h,w) = sum_{c,i,j} in(n,c,h+i-p,w+j-p) * ker(o,c,i,j)
pub fn conv2d<S: Scalar>(input: &Tensor<S>, kernel: &Tensor<S>, padding: usize) -> Result<Tensor<S>> {
    let (n, c_in, h, w, c_out, k) = check_conv_args(input, kernel, padding)?;
    let mut out = vec![S::ZERO; n * c_out * h * w];
    if k == 1 {
        // Pure channel mixing: one GEMM per batch item.
        for ni in 0..n {
            let x = &input.data()[ni * c_in * h * w..(ni + 1) * c_in * h * w];
            let o = &mut out[ni * c_out * h * w..(ni + 1) * c_out * h * w];
            gemm::matmul_nn(o, kernel.data(), x, c_out, c_in, h * w);
        }
        return Ok(Tensor::new(&[n, c_out, h, w], out));
    }
    let ck2 = c_in * k * k;
    let block_rows = (COL_BUDGET / (ck2 * w)).clamp(1, h);
    let mut blocks = Vec::new();
    for ni in 0..n {
        let mut h0 = 0;
        while h0 < h {
            let rows = block_rows.min(h - h0);
            blocks.push((ni, h0, rows));
            h0 += rows;
        }
    }
    // Blocks compute dense [c_out, rows*w] panels on their own workers;
    // with a single block the GEMM parallelizes internally instead.
    let single = blocks.len() == 1;
    let results: Vec<std::sync::OnceLock<Vec<S>>> =
        (0..blocks.len()).map(|_| std::sync::OnceLock::new()).collect();
    let flops_per_block = 2 * c_out * ck2 * block_rows * w;
    let min_blocks = (100_000_000 / flops_per_block.max(1)).max(1);
    parallel::run_partitioned(blocks.len(), min_blocks, |b0, b1| {
        let mut cols = vec![S::ZERO; ck2 * block_rows * w];
        for bi in b0..b1 {
            let (ni, h0, rows) = blocks[bi];
            let x = &input.data()[ni * c_in * h * w..(ni + 1) * c_in * h * w];
            let cols_used = &mut cols[..ck2 * rows * w];
            im2col(cols_used, x, c_in, h, w, k, padding, h0, rows);
            let mut block = vec![S::ZERO; c_out * rows * w];
            if single {
                gemm::matmul_nn(&mut block, kernel.data(), cols_used, c_out, ck2, rows * w);
            } else {
                gemm::matmul_nn_st(&mut block, kernel.data(), cols_used, c_out, ck2, rows * w);
            }
            results[bi].set(block).ok().expect("block computed twice");
        }
    });
    // Scatter the dense panels into the strided [c_out, h, w] layout.
    for (bi, &(ni, h0, rows)) in blocks.iter().enumerate() {
        let block = results[bi].get().expect("missing conv block");
        for co in 0..c_out {
            let dst = &mut out[((ni * c_out + co) * h + h0) * w..][..rows * w];
            dst.copy_from_slice(&block[co * rows * w..(co + 1) * rows * w]);
        }
    }
    Ok(Tensor::new(&[n, c_out, h, w], out))
}

/// Gathers padded input windows for output rows `h0 .. h0+rows` into
/// `cols[(c*k + i)*k + j][hr*w + x] = in(c, h0+hr+i-p, x+j-p)`.
fn im2col<S: Scalar>(
    cols: &mut [S],
    x: &[S],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    p: usize,
    h0: usize,
    rows: usize,
) {
    let rw = rows * w;
    for c in 0..c_in {
        for i in 0..k {
            for j in 0..k {
                let row = &mut cols[((c * k + i) * k + j) * rw..][..rw];
                for hr in 0..rows {
                    let hy = (h0 + hr + i) as isize - p as isize;
                    let dst = &mut row[hr * w..(hr + 1) * w];
                    if hy < 0 || hy >= h as isize {
                        dst.fill(S::ZERO);
                        continue;
                    }
                    let src = &x[(c * h + hy as usize) * w..][..w];
                    // x-window shifted by j - p with zero fill at edges.
                    let shift = j as isize - p as isize;
                    if shift >= 0 {
                        let s = shift as usize;
                        let len = w - s;
                        dst[..len].copy_from_slice(&src[s..]);
                        dst[len..].fill(S::ZERO);
                    } else {
                        let s = (-shift) as usize;
                        dst[..s].fill(S::ZERO);
                        dst[s..].copy_from_slice(&src[..w - s]);
                    }
                }
            }
        }
    }
}

/// Gradient of `conv2d` with respect to the kernel.
pub fn conv2d_grad_kernel(
    grad_out: &Tensor,
    input: &Tensor,
    c_out: usize,
    k: usize,
    padding: usize,
) -> Result<Tensor> {
    let (n, c_in, h, w) = input.dim4();
    let ck2 = c_in * k * k;
    let mut dk = vec![0.0; c_out * ck2];
    let mut cols = vec![0.0; ck2 * h * w];
    let mut rows_t = vec![0.0; ck2 * h * w];
    let mut partial = vec![0.0; c_out * ck2];
    for ni in 0..n {
        let x = &input.data()[ni * c_in * h * w..(ni + 1) * c_in * h * w];
        im2col(&mut cols, x, c_in, h, w, k, padding, 0, h);
        // dk[o, ckk] = sum_px g[o, px] * cols[ckk, px]; transposing the
        // patch matrix keeps both GEMM operands reduction-contiguous.
        gemm::transpose(&mut rows_t, &cols, ck2, h * w);
        let g = &grad_out.data()[ni * c_out * h * w..(ni + 1) * c_out * h * w];
        gemm::matmul_nn(&mut partial, g, &rows_t, c_out, h * w, ck2);
        for (d, p) in dk.iter_mut().zip(&partial) {
            *d += p;
        }
    }
    Tensor::from_vec(&[c_out, c_in, k, k], dk)
}

/// Gradient of `conv2d` with respect to the input: a conv with the
/// spatially flipped, channel-transposed kernel.
pub fn conv2d_grad_input(grad_out: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (c_out, c_in, k, _) = kernel.dim4();
    let mut flipped = vec![0.0; kernel.numel()];
    let kd = kernel.data();
    for o in 0..c_out {
        for c in 0..c_in {
            for i in 0..k {
                for j in 0..k {
                    flipped[((c * c_out + o) * k + (k - 1 - i)) * k + (k - 1 - j)] =
                        kd[((o * c_in + c) * k + i) * k + j];
                }
            }
        }
    }
    let kt = Tensor::new(&[c_in, c_out, k, k], flipped);
    conv2d(grad_out, &kt, (k - 1) / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let mut data = vec![0.0; shape.iter().product()];
        rng.fill_normal(&mut data, 1.0);
        Tensor::new(shape, data)
    }

    /// Direct 6-nested-loop evaluation of the contract.
    fn conv_oracle(x: &Tensor, k: &Tensor, p: usize) -> Tensor {
        let (n, c_in, h, w) = x.dim4();
        let (c_out, _, kk, _) = k.dim4();
        let mut out = Tensor::zeros(&[n, c_out, h, w]).to_vec();
        for ni in 0..n {
            for o in 0..c_out {
                for hi in 0..h {
                    for wi in 0..w {
                        let mut acc = 0.0;
                        for c in 0..c_in {
                            for i in 0..kk {
                                for j in 0..kk {
                                    let hy = hi as isize + i as isize - p as isize;
                                    let wx = wi as isize + j as isize - p as isize;
                                    if hy >= 0 && hy < h as isize && wx >= 0 && wx < w as isize {
                                        acc += x.at4(ni, c, hy as usize, wx as usize)
                                            * k.at4(o, c, i, j);
                                    }
                                }
                            }
                        }
                        out[((ni * c_out + o) * h + hi) * w + wi] = acc;
                    }
                }
            }
        }
        Tensor::new(&[n, c_out, h, w], out)
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!((x - y).abs() / scale < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let x = Tensor::from_vec(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0; // delta at the center tap
        let k = Tensor::from_vec(&[1, 1, 3, 3], k).unwrap();
        let out = conv2d(&x, &k, 1).unwrap();
        assert_eq!(out.to_vec(), x.to_vec());
    }

    #[test]
    fn zero_padding_contributes_zero() {
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.0]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d(&x, &k, 1).unwrap();
        assert_eq!(out.to_vec(), vec![2.0]);
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(10);
        let x = random(&[1, 2, 4, 4], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        assert_close(&conv2d(&x, &k, 1).unwrap(), &conv_oracle(&x, &k, 1), 1e-13);
    }

    #[test]
    fn matches_loop_oracle_various_shapes() {
        let mut rng = Rng::new(11);
        for &(n, ci, co, hw, k) in &[(2, 3, 5, 7, 3), (1, 4, 2, 9, 5), (1, 1, 1, 3, 1), (2, 2, 3, 17, 3)] {
            let x = random(&[n, ci, hw, hw], &mut rng);
            let ker = random(&[co, ci, k, k], &mut rng);
            let p = (k - 1) / 2;
            assert_close(&conv2d(&x, &ker, p).unwrap(), &conv_oracle(&x, &ker, p), 1e-12);
        }
    }

    #[test]
    fn rectangular_input_matches_oracle() {
        let mut rng = Rng::new(12);
        let x = random(&[1, 3, 5, 11], &mut rng);
        let k = random(&[4, 3, 3, 3], &mut rng);
        assert_close(&conv2d(&x, &k, 1).unwrap(), &conv_oracle(&x, &k, 1), 1e-12);
    }

    #[test]
    fn linear_in_both_arguments() {
        let mut rng = Rng::new(13);
        let x = random(&[1, 2, 6, 6], &mut rng);
        let y = random(&[1, 2, 6, 6], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let (a, b) = (0.7, -1.3);
        let lhs = conv2d(&x.scale(a).add(&y.scale(b)).unwrap(), &k, 1).unwrap();
        let rhs = conv2d(&x, &k, 1)
            .unwrap()
            .scale(a)
            .add(&conv2d(&y, &k, 1).unwrap().scale(b))
            .unwrap();
        assert_close(&lhs, &rhs, 1e-10);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let k = Tensor::<f64>::zeros(&[3, 3, 3, 3]);
        assert!(conv2d(&x, &k, 1).is_err());
    }

    #[test]
    fn wrong_padding_is_an_error() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let k = Tensor::<f64>::zeros(&[3, 2, 3, 3]);
        assert!(conv2d(&x, &k, 0).is_err());
    }

    #[test]
    fn grad_kernel_matches_direct_sum() {
        let mut rng = Rng::new(14);
        let x = random(&[2, 2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let g = random(&[2, 3, 5, 5], &mut rng);
        let dk = conv2d_grad_kernel(&g, &x, 3, 3, 1).unwrap();
        // dk(o,c,i,j) = sum_{n,h,w} g(n,o,h,w) x(n,c,h+i-1,w+j-1)
        for o in 0..3 {
            for c in 0..2 {
                for i in 0..3 {
                    for j in 0..3 {
                        let mut acc = 0.0;
                        for n in 0..2 {
                            for h in 0..5 {
                                for w in 0..5 {
                                    let hy = h as isize + i as isize - 1;
                                    let wx = w as isize + j as isize - 1;
                                    if hy >= 0 && hy < 5 && wx >= 0 && wx < 5 {
                                        acc += g.at4(n, o, h, w) * x.at4(n, c, hy as usize, wx as usize);
                                    }
                                }
                            }
                        }
                        let got = dk.at4(o, c, i, j);
                        assert!((got - acc).abs() < 1e-10, "{got} vs {acc}");
                    }
                }
            }
        }
        let _ = conv2d_grad_input(&g, &k).unwrap();
    }
}
