//! Bilinear gather at per-channel continuous coordinates.
//!
//! Coordinates are in source pixel units with pixel centers at integer
//! positions; positions outside [-0.5, W-0.5] x [-0.5, H-0.5] clamp to
//! the border. Channel 2c of the coordinate tensor holds x for image
//! channel c and channel 2c+1 holds y.

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_args<S: Scalar>(
    image: &Tensor<S>,
    coords: &Tensor<S>,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    if image.rank() != 4 || coords.rank() != 4 {
        return Err(CoreError::dims("grid_sample", "rank-4 operands required"));
    }
    let (n, c, h, w) = image.dim4();
    let (cn, cc, oh, ow) = coords.dim4();
    if cn != n || cc != 2 * c {
        return Err(CoreError::dims(
            "grid_sample",
            format!("coords {:?} incompatible with image {:?}", coords.shape(), image.shape()),
        ));
    }
    Ok((n, c, h, w, oh, ow))
}

#[derive(Clone, Copy)]
struct Taps {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: f64,
    fy: f64,
    // False where the raw coordinate fell outside the clamp range, in
    // which case it carries no gradient.
    x_live: bool,
    y_live: bool,
}

fn resolve(x_raw: f64, y_raw: f64, h: usize, w: usize) -> Taps {
    let x_hi = w as f64 - 0.5;
    let y_hi = h as f64 - 0.5;
    let x_live = (-0.5..=x_hi).contains(&x_raw);
    let y_live = (-0.5..=y_hi).contains(&y_raw);
    let x = x_raw.clamp(-0.5, x_hi);
    let y = y_raw.clamp(-0.5, y_hi);
    let xf = x.floor();
    let yf = y.floor();
    let fx = x - xf;
    let fy = y - yf;
    let clamp_i = |v: f64, n: usize| -> usize { (v.max(0.0) as usize).min(n - 1) };
    Taps {
        x0: clamp_i(xf, w),
        x1: clamp_i(xf + 1.0, w),
        y0: clamp_i(yf, h),
        y1: clamp_i(yf + 1.0, h),
        fx,
        fy,
        x_live,
        y_live,
    }
}

pub fn grid_sample_bilinear<S: Scalar>(image: &Tensor<S>, coords: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, c, h, w, oh, ow) = check_args(image, coords)?;
    let img = image.data();
    let crd = coords.data();
    let mut out = vec![S::ZERO; n * c * oh * ow];
    for ni in 0..n {
        for ci in 0..c {
            let plane = &img[(ni * c + ci) * h * w..][..h * w];
            let xs = &crd[((ni * 2 * c) + 2 * ci) * oh * ow..][..oh * ow];
            let ys = &crd[((ni * 2 * c) + 2 * ci + 1) * oh * ow..][..oh * ow];
            let dst = &mut out[(ni * c + ci) * oh * ow..][..oh * ow];
            for i in 0..oh * ow {
                let t = resolve(xs[i].to_f64(), ys[i].to_f64(), h, w);
                let a = plane[t.y0 * w + t.x0];
                let b = plane[t.y0 * w + t.x1];
                let d = plane[t.y1 * w + t.x0];
                let e = plane[t.y1 * w + t.x1];
                let fx = S::from_f64(t.fx);
                let fy = S::from_f64(t.fy);
                let one = S::ONE;
                let top = (one - fx) * a + fx * b;
                let bot = (one - fx) * d + fx * e;
                dst[i] = (one - fy) * top + fy * bot;
            }
        }
    }
    Ok(Tensor::new(&[n, c, oh, ow], out))
}

/// Gradients of [`grid_sample_bilinear`] with respect to the image and
/// the coordinates.
pub fn grid_sample_backward(
    grad_out: &Tensor,
    image: &Tensor,
    coords: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w, oh, ow) = check_args(image, coords)?;
    let img = image.data();
    let crd = coords.data();
    let g = grad_out.data();
    let mut d_img = vec![0.0; image.numel()];
    let mut d_crd = vec![0.0; coords.numel()];
    for ni in 0..n {
        for ci in 0..c {
            let plane = &img[(ni * c + ci) * h * w..][..h * w];
            let dplane = &mut d_img[(ni * c + ci) * h * w..][..h * w];
            let base_x = ((ni * 2 * c) + 2 * ci) * oh * ow;
            let base_y = ((ni * 2 * c) + 2 * ci + 1) * oh * ow;
            let gout = &g[(ni * c + ci) * oh * ow..][..oh * ow];
            for i in 0..oh * ow {
                let t = resolve(crd[base_x + i], crd[base_y + i], h, w);
                let go = gout[i];
                let (fx, fy) = (t.fx, t.fy);
                dplane[t.y0 * w + t.x0] += go * (1.0 - fy) * (1.0 - fx);
                dplane[t.y0 * w + t.x1] += go * (1.0 - fy) * fx;
                dplane[t.y1 * w + t.x0] += go * fy * (1.0 - fx);
                dplane[t.y1 * w + t.x1] += go * fy * fx;
                let a = plane[t.y0 * w + t.x0];
                let b = plane[t.y0 * w + t.x1];
                let d = plane[t.y1 * w + t.x0];
                let e = plane[t.y1 * w + t.x1];
                if t.x_live {
                    d_crd[base_x + i] += go * ((1.0 - fy) * (b - a) + fy * (e - d));
                }
                if t.y_live {
                    let top = (1.0 - fx) * a + fx * b;
                    let bot = (1.0 - fx) * d + fx * e;
                    d_crd[base_y + i] += go * (bot - top);
                }
            }
        }
    }
    Ok((
        Tensor::new(image.shape(), d_img),
        Tensor::new(coords.shape(), d_crd),
    ))
}

/// Coordinates that reproduce the input exactly: HR pixel (h, w) maps
/// to source position ((h+0.5)/r - 0.5, (w+0.5)/r - 0.5), repeated per
/// channel in (x, y) pairs. With r = 1 this is the identity grid.
pub fn bilinear_base_grid(n: usize, c: usize, h: usize, w: usize, r: usize) -> Tensor {
    let (oh, ow) = (h * r, w * r);
    let mut data = vec![0.0; n * 2 * c * oh * ow];
    let plane = oh * ow;
    let rf = r as f64;
    for ni in 0..n {
        for ci in 0..c {
            let bx = ((ni * 2 * c) + 2 * ci) * plane;
            let by = ((ni * 2 * c) + 2 * ci + 1) * plane;
            for y in 0..oh {
                let sy = (y as f64 + 0.5) / rf - 0.5;
                for x in 0..ow {
                    data[bx + y * ow + x] = (x as f64 + 0.5) / rf - 0.5;
                    data[by + y * ow + x] = sy;
                }
            }
        }
    }
    Tensor::new(&[n, 2 * c, oh, ow], data)
}
