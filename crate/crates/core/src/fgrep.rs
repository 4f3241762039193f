//! Feature-level geometric re-parameterization.
//!
//! The eight dihedral transforms of the square act on the spatial axes
//! of feature maps and kernels. Because zero padding is symmetric
//! under all eight, an ensemble of transformed convolutions collapses
//! to a single convolution with the transform-averaged kernel; the
//! three forms below are algebraically identical and are cross-checked
//! in the tests.

use crate::conv::conv2d;
use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One of the eight transforms: an optional horizontal mirror followed
/// by `rot` counter-clockwise quarter turns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DihedralTransform {
    rot: u8,
    flip: bool,
}

pub const DIHEDRAL: [DihedralTransform; 8] = [
    DihedralTransform { rot: 0, flip: false },
    DihedralTransform { rot: 1, flip: false },
    DihedralTransform { rot: 2, flip: false },
    DihedralTransform { rot: 3, flip: false },
    DihedralTransform { rot: 0, flip: true },
    DihedralTransform { rot: 1, flip: true },
    DihedralTransform { rot: 2, flip: true },
    DihedralTransform { rot: 3, flip: true },
];

impl DihedralTransform {
    pub fn id(self) -> usize {
        self.rot as usize + if self.flip { 4 } else { 0 }
    }

    pub fn from_id(id: usize) -> Self {
        DIHEDRAL[id]
    }

    pub const IDENTITY: DihedralTransform = DihedralTransform { rot: 0, flip: false };

    /// Group inverse. Mirror-containing elements are involutions.
    pub fn inverse(self) -> Self {
        if self.flip {
            self
        } else {
            DihedralTransform {
                rot: (4 - self.rot) % 4,
                flip: false,
            }
        }
    }

    /// Where position (h, w) of an H x W grid lands, with the output
    /// grid dims returned by `out_dims`.
    pub fn map_index(self, h: usize, w: usize, hh: usize, ww: usize) -> (usize, usize) {
        let (mut y, mut x) = (h, w);
        let (mut ch, mut cw) = (hh, ww);
        if self.flip {
            x = cw - 1 - x;
        }
        for _ in 0..self.rot {
            // CCW quarter turn: (y, x) on (ch, cw) -> (cw-1-x, y)
            let ny = cw - 1 - x;
            let nx = y;
            y = ny;
            x = nx;
            std::mem::swap(&mut ch, &mut cw);
        }
        (y, x)
    }

    pub fn out_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.rot % 2 == 1 { (w, h) } else { (h, w) }
    }
}

/// Applies a transform to the last two axes; leading axes are batch.
pub fn apply_transform<S: Scalar>(t: DihedralTransform, x: &Tensor<S>) -> Tensor<S> {
    let r = x.rank();
    assert!(r >= 2, "apply_transform needs spatial axes");
    let h = x.shape()[r - 2];
    let w = x.shape()[r - 1];
    let batch: usize = x.shape()[..r - 2].iter().product();
    let (oh, ow) = t.out_dims(h, w);
    let mut out_shape = x.shape().to_vec();
    out_shape[r - 2] = oh;
    out_shape[r - 1] = ow;
    let src = x.data();
    let mut data = vec![S::ZERO; x.numel()];
    for b in 0..batch {
        let sp = &src[b * h * w..(b + 1) * h * w];
        let dp = &mut data[b * oh * ow..(b + 1) * oh * ow];
        for y in 0..h {
            for xx in 0..w {
                let (ny, nx) = t.map_index(y, xx, h, w);
                dp[ny * ow + nx] = sp[y * w + xx];
            }
        }
    }
    Tensor::new(&out_shape, data)
}

fn check_square_kernel(k: &Tensor) -> Result<()> {
    let (_, _, kh, kw) = k.dim4();
    if kh != kw {
        return Err(CoreError::dims("fgrep", format!("kernel must be square, got {kh}x{kw}")));
    }
    Ok(())
}

/// Eight transformed convolutions, inverse-transformed and averaged.
pub fn ensemble_form(m: &Tensor, k: &Tensor) -> Result<Tensor> {
    check_square_kernel(k)?;
    let pad = (k.shape()[2] - 1) / 2;
    let mut acc: Option<Tensor> = None;
    for t in DIHEDRAL {
        let conv = conv2d(&apply_transform(t, m), k, pad)?;
        let back = apply_transform(t.inverse(), &conv);
        acc = Some(match acc {
            None => back,
            Some(a) => a.add(&back)?,
        });
    }
    Ok(acc.unwrap().scale(1.0 / 8.0))
}

/// One feature map convolved with the eight transformed kernels.
pub fn augmented_kernel_form(m: &Tensor, k: &Tensor) -> Result<Tensor> {
    check_square_kernel(k)?;
    let pad = (k.shape()[2] - 1) / 2;
    let mut acc: Option<Tensor> = None;
    for t in DIHEDRAL {
        let conv = conv2d(m, &apply_transform(t, k), pad)?;
        acc = Some(match acc {
            None => conv,
            Some(a) => a.add(&conv)?,
        });
    }
    Ok(acc.unwrap().scale(1.0 / 8.0))
}

/// The transform-averaged kernel; convolving with it equals both
/// ensemble forms.
pub fn reparameterize(k: &Tensor) -> Result<Tensor> {
    check_square_kernel(k)?;
    let mut acc: Option<Tensor> = None;
    for t in DIHEDRAL {
        let kt = apply_transform(t, k);
        acc = Some(match acc {
            None => kt,
            Some(a) => a.add(&kt)?,
        });
    }
    Ok(acc.unwrap().scale(1.0 / 8.0))
}

/// Sub-pixel slot permutation induced by a transform on the packed
/// `[N, C*r^2, H, W]` layout: rearranges channels so that
/// depth-to-space commutes with the geometric transform.
pub fn transform_packed(t: DihedralTransform, x: &Tensor, r: usize) -> Result<Tensor> {
    let (n, cr2, h, w) = x.dim4();
    if cr2 % (r * r) != 0 {
        return Err(CoreError::dims(
            "transform_packed",
            format!("channels {cr2} not divisible by r^2 = {}", r * r),
        ));
    }
    let c = cr2 / (r * r);
    // Channel shuffle: slot (dy, dx) moves to its transformed position
    // within the r x r sub-pixel grid.
    let mut perm = vec![0usize; r * r];
    for dy in 0..r {
        for dx in 0..r {
            let (ny, nx) = t.map_index(dy, dx, r, r);
            perm[ny * r + nx] = dy * r + dx;
        }
    }
    let plane = h * w;
    let mut data = vec![0.0; x.numel()];
    for ni in 0..n {
        for ci in 0..c {
            for s in 0..r * r {
                let dst = ((ni * cr2) + ci * r * r + s) * plane;
                let srcc = ((ni * cr2) + ci * r * r + perm[s]) * plane;
                data[dst..dst + plane].copy_from_slice(&x.data()[srcc..srcc + plane]);
            }
        }
    }
    let shuffled = Tensor::new(x.shape(), data);
    Ok(apply_transform(t, &shuffled))
}

/// Diagnostic: the ensemble taken in HR space, i.e. with the sub-pixel
/// channel permutation a geometric ensemble of the *upsampled* output
/// would require. Not used in training; kept for studying how it
/// differs from [`ensemble_form`].
pub fn ensemble_form_hr(m: &Tensor, k: &Tensor, r: usize) -> Result<Tensor> {
    check_square_kernel(k)?;
    let pad = (k.shape()[2] - 1) / 2;
    let mut acc: Option<Tensor> = None;
    for t in DIHEDRAL {
        let conv = conv2d(&apply_transform(t, m), k, pad)?;
        let back = transform_packed(t.inverse(), &conv, r)?;
        acc = Some(match acc {
            None => back,
            Some(a) => a.add(&back)?,
        });
    }
    Ok(acc.unwrap().scale(1.0 / 8.0))
}
