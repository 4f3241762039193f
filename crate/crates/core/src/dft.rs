//! Unnormalized forward 2-D DFT per (n, c) plane.
//!
//! X(u,v) = sum_{h,w} x(h,w) e^{-2 pi i (uh/H + vw/W)}
//!
//! Evaluated as row/column transforms against cached cosine/sine
//! matrices, so arbitrary extents are supported and the arithmetic is
//! plain GEMM.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::Result;
use crate::gemm::matmul_nn;
use crate::tensor::Tensor;

struct Twiddle {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

fn twiddle(n: usize) -> Arc<Twiddle> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Twiddle>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| {
            let mut cos = vec![0.0; n * n];
            let mut sin = vec![0.0; n * n];
            for u in 0..n {
                for h in 0..n {
                    // Reduce u*h modulo n before the trig call so large
                    // planes do not lose phase precision.
                    let k = (u * h) % n;
                    let ang = std::f64::consts::TAU * k as f64 / n as f64;
                    cos[u * n + h] = ang.cos();
                    sin[u * n + h] = ang.sin();
                }
            }
            Arc::new(Twiddle { cos, sin })
        })
        .clone()
}

/// One H x W plane to (re, im).
fn plane_forward(x: &[f64], h: usize, w: usize, re: &mut [f64], im: &mut [f64]) {
    let tw = twiddle(w);
    let th = twiddle(h);
    // Along w: R1[y,v] = sum_w x[y,w] cos(2pi v w / W), I1 = -sum sin.
    let mut r1 = vec![0.0; h * w];
    let mut i1 = vec![0.0; h * w];
    matmul_nn(&mut r1, x, &tw.cos, h, w, w);
    matmul_nn(&mut i1, x, &tw.sin, h, w, w);
    for v in i1.iter_mut() {
        *v = -*v;
    }
    // Along h with the complex twiddle (cos - i sin).
    let mut t1 = vec![0.0; h * w];
    let mut t2 = vec![0.0; h * w];
    matmul_nn(&mut t1, &th.cos, &r1, h, h, w);
    matmul_nn(&mut t2, &th.sin, &i1, h, h, w);
    for i in 0..h * w {
        re[i] = t1[i] + t2[i];
    }
    matmul_nn(&mut t1, &th.cos, &i1, h, h, w);
    matmul_nn(&mut t2, &th.sin, &r1, h, h, w);
    for i in 0..h * w {
        im[i] = t1[i] - t2[i];
    }
}

/// Adjoint of the forward transform: given cotangents on (re, im),
/// returns the cotangent on the input plane.
fn plane_adjoint(gre: &[f64], gim: &[f64], h: usize, w: usize, out: &mut [f64]) {
    let tw = twiddle(w);
    let th = twiddle(h);
    // P = gre*Cw - gim*Sw ; Q = gre*Sw + gim*Cw
    let mut p = vec![0.0; h * w];
    let mut q = vec![0.0; h * w];
    let mut t = vec![0.0; h * w];
    matmul_nn(&mut p, gre, &tw.cos, h, w, w);
    matmul_nn(&mut t, gim, &tw.sin, h, w, w);
    for i in 0..h * w {
        p[i] -= t[i];
    }
    matmul_nn(&mut q, gre, &tw.sin, h, w, w);
    matmul_nn(&mut t, gim, &tw.cos, h, w, w);
    for i in 0..h * w {
        q[i] += t[i];
    }
    // out = Ch*P - Sh*Q
    let mut o1 = vec![0.0; h * w];
    matmul_nn(&mut o1, &th.cos, &p, h, h, w);
    matmul_nn(&mut t, &th.sin, &q, h, h, w);
    for i in 0..h * w {
        out[i] = o1[i] - t[i];
    }
}

/// Forward DFT of every (n, c) plane. Returns (real, imag), each with
/// the input's shape.
pub fn dft2(input: &Tensor) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = input.dim4();
    let planes = n * c;
    let plane = h * w;
    let mut re = vec![0.0; planes * plane];
    let mut im = vec![0.0; planes * plane];
    for p in 0..planes {
        plane_forward(
            &input.data()[p * plane..(p + 1) * plane],
            h,
            w,
            &mut re[p * plane..(p + 1) * plane],
            &mut im[p * plane..(p + 1) * plane],
        );
    }
    Ok((
        Tensor::new(&[n, c, h, w], re),
        Tensor::new(&[n, c, h, w], im),
    ))
}

/// Forward DFT with real parts in channels 0..C and imaginary parts in
/// channels C..2C: `[N, C, H, W] -> [N, 2C, H, W]`.
pub fn dft2_stacked(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dim4();
    let plane = h * w;
    let mut out = vec![0.0; n * 2 * c * plane];
    for ni in 0..n {
        for ci in 0..c {
            let src = &input.data()[(ni * c + ci) * plane..][..plane];
            // Two disjoint output planes; split around the imag offset.
            let base = ni * 2 * c * plane;
            let (head, tail) = out[base..base + 2 * c * plane].split_at_mut(c * plane);
            plane_forward(
                src,
                h,
                w,
                &mut head[ci * plane..(ci + 1) * plane],
                &mut tail[ci * plane..(ci + 1) * plane],
            );
        }
    }
    Ok(Tensor::new(&[n, 2 * c, h, w], out))
}

/// Adjoint of [`dft2_stacked`].
pub fn dft2_stacked_adjoint(grad: &Tensor) -> Result<Tensor> {
    let (n, c2, h, w) = grad.dim4();
    let c = c2 / 2;
    let plane = h * w;
    let mut out = vec![0.0; n * c * plane];
    for ni in 0..n {
        for ci in 0..c {
            let gre = &grad.data()[(ni * 2 * c + ci) * plane..][..plane];
            let gim = &grad.data()[(ni * 2 * c + c + ci) * plane..][..plane];
            plane_adjoint(gre, gim, h, w, &mut out[(ni * c + ci) * plane..][..plane]);
        }
    }
    Ok(Tensor::new(&[n, c, h, w], out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_dft(x: &Tensor) -> (Tensor, Tensor) {
        let (n, c, h, w) = x.dim4();
        let mut re = Tensor::zeros(&[n, c, h, w]).to_vec();
        let mut im = re.clone();
        for ni in 0..n {
            for ci in 0..c {
                for u in 0..h {
                    for v in 0..w {
                        let (mut sr, mut si) = (0.0, 0.0);
                        for hh in 0..h {
                            for ww in 0..w {
                                let ang = -std::f64::consts::TAU
                                    * (u as f64 * hh as f64 / h as f64
                                        + v as f64 * ww as f64 / w as f64);
                                let val = x.at4(ni, ci, hh, ww);
                                sr += val * ang.cos();
                                si += val * ang.sin();
                            }
                        }
                        let idx = ((ni * c + ci) * h + u) * w + v;
                        re[idx] = sr;
                        im[idx] = si;
                    }
                }
            }
        }
        (Tensor::new(x.shape(), re), Tensor::new(x.shape(), im))
    }

    #[test]
    fn constant_plane_is_dc_only() {
        let a = 3.25;
        let x = Tensor::full(&[1, 1, 4, 6], a);
        let (re, im) = dft2(&x).unwrap();
        for u in 0..4 {
            for v in 0..6 {
                let want = if u == 0 && v == 0 { a * 24.0 } else { 0.0 };
                assert!((re.at4(0, 0, u, v) - want).abs() < 1e-9);
                assert!(im.at4(0, 0, u, v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn impulse_at_origin_is_flat() {
        let mut data = vec![0.0; 25];
        data[0] = 1.0;
        let x = Tensor::from_vec(&[1, 1, 5, 5], data).unwrap();
        let (re, im) = dft2(&x).unwrap();
        for i in 0..25 {
            assert!((re.data()[i] - 1.0).abs() < 1e-12);
            assert!(im.data()[i].abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds_on_random_8x8() {
        let mut rng = Rng::new(30);
        let mut data = vec![0.0; 64];
        rng.fill_normal(&mut data, 1.0);
        let x = Tensor::from_vec(&[1, 1, 8, 8], data).unwrap();
        let (re, im) = dft2(&x).unwrap();
        let spec: f64 = re
            .data()
            .iter()
            .zip(im.data())
            .map(|(r, i)| r * r + i * i)
            .sum();
        let time: f64 = x.data().iter().map(|v| v * v).sum::<f64>() * 64.0;
        assert!((spec - time).abs() / time < 1e-9, "{spec} vs {time}");
    }

    #[test]
    fn matches_naive_on_awkward_sizes() {
        let mut rng = Rng::new(31);
        for &(h, w) in &[(3, 5), (7, 4), (6, 6), (1, 9)] {
            let mut data = vec![0.0; h * w * 2];
            rng.fill_normal(&mut data, 1.0);
            let x = Tensor::from_vec(&[1, 2, h, w], data).unwrap();
            let (re, im) = dft2(&x).unwrap();
            let (nre, nim) = naive_dft(&x);
            for (a, b) in re.data().iter().zip(nre.data()) {
                assert!((a - b).abs() < 1e-9);
            }
            for (a, b) in im.data().iter().zip(nim.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn stacked_layout_matches_pair() {
        let mut rng = Rng::new(32);
        let mut data = vec![0.0; 2 * 3 * 4 * 4];
        rng.fill_normal(&mut data, 1.0);
        let x = Tensor::from_vec(&[2, 3, 4, 4], data).unwrap();
        let (re, im) = dft2(&x).unwrap();
        let stacked = dft2_stacked(&x).unwrap();
        assert_eq!(stacked.shape(), &[2, 6, 4, 4]);
        let re2 = stacked.slice_axis(1, 0, 3).unwrap();
        let im2 = stacked.slice_axis(1, 3, 3).unwrap();
        assert_eq!(re2.to_vec(), re.to_vec());
        assert_eq!(im2.to_vec(), im.to_vec());
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        // <F(x), g> == <x, F*(g)> for the stacked layout.
        let mut rng = Rng::new(33);
        let mut xv = vec![0.0; 5 * 4];
        let mut gv = vec![0.0; 2 * 5 * 4];
        rng.fill_normal(&mut xv, 1.0);
        rng.fill_normal(&mut gv, 1.0);
        let x = Tensor::from_vec(&[1, 1, 5, 4], xv).unwrap();
        let g = Tensor::from_vec(&[1, 2, 5, 4], gv).unwrap();
        let fx = dft2_stacked(&x).unwrap();
        let lhs: f64 = fx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let adj = dft2_stacked_adjoint(&g).unwrap();
        let rhs: f64 = x.data().iter().zip(adj.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
    }
}
