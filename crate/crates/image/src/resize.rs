//! Separable cubic resampling with the reference resizer's semantics:
//! cubic kernel a = -0.5, antialiasing (kernel widened by the inverse
//! scale) on downsampling, edge replication via index clamping, and
//! per-pixel weight renormalization.

use igkit_core::Tensor;

use crate::error::{ImageError, Result};

/// Keys' cubic kernel with a = -0.5.
pub fn cubic(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 1.0 {
        (1.5 * ax - 2.5) * ax * ax + 1.0
    } else if ax < 2.0 {
        ((-0.5 * ax + 2.5) * ax - 4.0) * ax + 2.0
    } else {
        0.0
    }
}

/// Per-output-pixel taps along one axis.
struct AxisPlan {
    // taps[o] = (first clamped source index run, weights)
    indices: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
}

fn plan_axis(in_n: usize, out_n: usize, scale: f64, antialias: bool) -> AxisPlan {
    let shrink = scale < 1.0 && antialias;
    let kscale = if shrink { scale } else { 1.0 };
    let support = 2.0 / kscale; // cubic half-width after widening
    let mut indices = Vec::with_capacity(out_n);
    let mut weights = Vec::with_capacity(out_n);
    for o in 0..out_n {
        // Center of output pixel o in input coordinates.
        let u = (o as f64 + 0.5) / scale - 0.5;
        let left = (u - support).floor() as isize + 1;
        let count = (2.0 * support).ceil() as isize + 1;
        let mut idx = Vec::with_capacity(count as usize);
        let mut wts = Vec::with_capacity(count as usize);
        let mut total = 0.0;
        for i in left..left + count {
            let w = cubic((u - i as f64) * kscale);
            if w == 0.0 {
                continue;
            }
            let clamped = i.clamp(0, in_n as isize - 1) as usize;
            idx.push(clamped);
            wts.push(w);
            total += w;
        }
        for w in &mut wts {
            *w /= total;
        }
        indices.push(idx);
        weights.push(wts);
    }
    AxisPlan { indices, weights }
}

fn apply_axis_w(src: &[f64], h: usize, w: usize, plan: &AxisPlan) -> Vec<f64> {
    let ow = plan.indices.len();
    let mut out = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let orow = &mut out[y * ow..(y + 1) * ow];
        for (o, slot) in orow.iter_mut().enumerate() {
            let idx = &plan.indices[o];
            let wts = &plan.weights[o];
            let mut acc = 0.0;
            for (&i, &wt) in idx.iter().zip(wts) {
                acc += row[i] * wt;
            }
            *slot = acc;
        }
    }
    out
}

fn apply_axis_h(src: &[f64], _h: usize, w: usize, plan: &AxisPlan) -> Vec<f64> {
    let oh = plan.indices.len();
    let mut out = vec![0.0; oh * w];
    for (o, _) in plan.indices.iter().enumerate() {
        let idx = &plan.indices[o];
        let wts = &plan.weights[o];
        let orow = &mut out[o * w..(o + 1) * w];
        orow.fill(0.0);
        for (&i, &wt) in idx.iter().zip(wts) {
            let srow = &src[i * w..(i + 1) * w];
            for (slot, &v) in orow.iter_mut().zip(srow) {
                *slot += v * wt;
            }
        }
    }
    out
}

/// Resizes `[N, C, H, W]` by `scale`; output extents are
/// `round(H*scale) x round(W*scale)`. Values are not clamped.
pub fn bicubic_resize(input: &Tensor, scale: f64) -> Result<Tensor> {
    if !(scale > 0.0) {
        return Err(ImageError::Dimension(format!("scale {scale} must be positive")));
    }
    let (_, _, h, w) = dims(input)?;
    let oh = (h as f64 * scale).round() as usize;
    let ow = (w as f64 * scale).round() as usize;
    if oh == 0 || ow == 0 {
        return Err(ImageError::Dimension(format!(
            "target {oh}x{ow} from {h}x{w} at scale {scale}"
        )));
    }
    resize_with(input, oh, ow, scale, scale)
}

/// Resizes to an explicit size; the mapping ratio is derived per axis.
pub fn bicubic_resize_to(input: &Tensor, oh: usize, ow: usize) -> Result<Tensor> {
    let (_, _, h, w) = dims(input)?;
    if oh == 0 || ow == 0 {
        return Err(ImageError::Dimension("target size must be positive".into()));
    }
    resize_with(input, oh, ow, oh as f64 / h as f64, ow as f64 / w as f64)
}

fn dims(t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    if t.rank() != 4 {
        return Err(ImageError::Dimension(format!("expected [N,C,H,W], got {:?}", t.shape())));
    }
    Ok((t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]))
}

fn resize_with(input: &Tensor, oh: usize, ow: usize, sy: f64, sx: f64) -> Result<Tensor> {
    let (n, c, h, w) = dims(input)?;
    let plan_x = plan_axis(w, ow, sx, true);
    let plan_y = plan_axis(h, oh, sy, true);
    let mut out = vec![0.0; n * c * oh * ow];
    for p in 0..n * c {
        let plane = &input.data()[p * h * w..(p + 1) * h * w];
        let mid = apply_axis_w(plane, h, w, &plan_x);
        let done = apply_axis_h(&mid, h, ow, &plan_y);
        out[p * oh * ow..(p + 1) * oh * ow].copy_from_slice(&done);
    }
    Ok(Tensor::from_vec(&[n, c, oh, ow], out).expect("resize shape"))
}

/// Plain bilinear upsample by integer factor r with the half-pixel
/// convention; the zero-offset reference for the learned sampler.
pub fn bilinear_upsample(input: &Tensor, r: usize) -> Result<Tensor> {
    let (n, c, h, w) = dims(input)?;
    if r == 0 {
        return Err(ImageError::Dimension("r must be >= 1".into()));
    }
    let grid = igkit_core::sample::bilinear_base_grid(n, c, h, w, r);
    Ok(igkit_core::sample::grid_sample_bilinear(input, &grid)?)
}
