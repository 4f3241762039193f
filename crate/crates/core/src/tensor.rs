//! Dense N-dimensional arrays in row-major NCHW layout.
//!
//! Element (n, c, h, w) of a rank-4 tensor lives at
//! `((n*C + c)*H + h)*W + w`. Tensors are immutable after construction
//! and cheap to clone; every operation returns a fresh tensor.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;

// Elementwise passes below this many elements stay on one thread.
const PAR_ELEMWISE: usize = 1 << 22;

#[derive(Clone)]
pub struct Tensor<S: Scalar = f64> {
    shape: Vec<usize>,
    data: Arc<[S]>,
}

impl<S: Scalar> std::fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])?;
        }
        Ok(())
    }
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(CoreError::dims("tensor", format!("zero extent in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::dims(
                "tensor",
                format!("shape {shape:?} wants {numel} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: data.into(),
        })
    }

    /// Construction for internal code paths whose shapes are correct by
    /// construction.
    pub(crate) fn new(shape: &[usize], data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        debug_assert!(shape.iter().all(|&d| d >= 1));
        Tensor {
            shape: shape.to_vec(),
            data: data.into(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![S::ZERO; numel])
    }

    pub fn full(shape: &[usize], v: S) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![v; numel])
    }

    pub fn scalar(v: S) -> Self {
        Self::new(&[1], vec![v])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.data.to_vec()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }

    /// Rank-4 accessors. Panics on lower-rank tensors.
    pub fn dim4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.rank(), 4, "expected rank-4 NCHW tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> S {
        let (_, cc, hh, ww) = self.dim4();
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(CoreError::dims(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S + Sync) -> Self {
        let n = self.numel();
        let mut data = vec![S::ZERO; n];
        let src = &self.data;
        crate::parallel::fill_rows(&mut data, 1, PAR_ELEMWISE, |range, band| {
            for (slot, &x) in band.iter_mut().zip(&src[range]) {
                *slot = f(x);
            }
        });
        Self::new(&self.shape, data)
    }

    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(S, S) -> S + Sync) -> Result<Self> {
        if self.shape != other.shape {
            return Err(CoreError::dims(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let n = self.numel();
        let mut data = vec![S::ZERO; n];
        let (a, b) = (&self.data, &other.data);
        crate::parallel::fill_rows(&mut data, 1, PAR_ELEMWISE, |range, band| {
            for (i, slot) in range.clone().zip(band.iter_mut()) {
                *slot = f(a[i], b[i]);
            }
        });
        Ok(Self::new(&self.shape, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, v: S) -> Self {
        self.map(|x| x * v)
    }

    pub fn add_scalar(&self, v: S) -> Self {
        self.map(|x| x + v)
    }

    pub fn relu(&self) -> Self {
        self.map(|x| x.maxs(S::ZERO))
    }

    pub fn sigmoid(&self) -> Self {
        self.map(|x| S::ONE / (S::ONE + (-x).exp()))
    }

    pub fn sin(&self) -> Self {
        self.map(|x| x.sin())
    }

    pub fn cos(&self) -> Self {
        self.map(|x| x.cos())
    }

    pub fn abs(&self) -> Self {
        self.map(|x| x.abs())
    }

    /// Sequential left-to-right sum; the order is part of the
    /// reproducibility contract.
    pub fn sum(&self) -> S {
        let mut s = S::ZERO;
        for &v in self.data.iter() {
            s += v;
        }
        s
    }

    pub fn mean(&self) -> S {
        self.sum() / S::from_f64(self.numel() as f64)
    }

    /// Permutes axes with a contiguous copy.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let r = self.rank();
        if axes.len() != r {
            return Err(CoreError::invalid("permute", format!("axes {axes:?} for rank {r}")));
        }
        let mut seen = vec![false; r];
        for &a in axes {
            if a >= r || seen[a] {
                return Err(CoreError::invalid("permute", format!("bad axes {axes:?}")));
            }
            seen[a] = true;
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let in_strides = strides(&self.shape);
        let out_strides = strides(&out_shape);
        let mut data = vec![S::ZERO; self.numel()];
        // Walk output linearly; gather from the permuted input index.
        let mut idx = vec![0usize; r];
        for (o, slot) in data.iter_mut().enumerate() {
            let mut rem = o;
            for d in 0..r {
                idx[d] = rem / out_strides[d];
                rem %= out_strides[d];
            }
            let mut src = 0;
            for d in 0..r {
                src += idx[d] * in_strides[axes[d]];
            }
            *slot = self.data[src];
        }
        Ok(Self::new(&out_shape, data))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[&Self], axis: usize) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::invalid("concat", "empty input list"))?;
        let r = first.rank();
        if axis >= r {
            return Err(CoreError::invalid("concat", format!("axis {axis} for rank {r}")));
        }
        let mut axis_total = 0;
        for p in parts {
            if p.rank() != r {
                return Err(CoreError::dims("concat", "rank mismatch"));
            }
            for d in 0..r {
                if d != axis && p.shape[d] != first.shape[d] {
                    return Err(CoreError::dims(
                        "concat",
                        format!("{:?} vs {:?} on axis {d}", p.shape, first.shape),
                    ));
                }
            }
            axis_total += p.shape[axis];
        }
        let mut out_shape = first.shape.clone();
        out_shape[axis] = axis_total;
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * axis_total * inner);
        for o in 0..outer {
            for p in parts {
                let rows = p.shape[axis];
                let start = o * rows * inner;
                data.extend_from_slice(&p.data[start..start + rows * inner]);
            }
        }
        Ok(Self::new(&out_shape, data))
    }

    /// Copies `len` extents starting at `start` along `axis`.
    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Result<Self> {
        let r = self.rank();
        if axis >= r || start + len > self.shape[axis] || len == 0 {
            return Err(CoreError::invalid(
                "slice",
                format!("axis {axis} range {start}..{} of {:?}", start + len, self.shape),
            ));
        }
        let mut out_shape = self.shape.clone();
        out_shape[axis] = len;
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let full = self.shape[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Ok(Self::new(&out_shape, data))
    }

    /// Converts the element type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        let data: Vec<T> = self.data.iter().map(|&x| T::from_f64(x.to_f64())).collect();
        Tensor::new(&self.shape, data)
    }
}

pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

/// Sub-pixel rearrangement: `[N, C*r^2, H, W] -> [N, C, rH, rW]` with
/// `out(n, c, h*r+dy, w*r+dx) = in(n, c*r^2 + dy*r + dx, h, w)`.
pub fn depth_to_space<S: Scalar>(input: &Tensor<S>, r: usize) -> Result<Tensor<S>> {
    if r == 0 {
        return Err(CoreError::invalid("depth_to_space", "r must be >= 1"));
    }
    let (n, c_in, h, w) = input.dim4();
    if c_in % (r * r) != 0 {
        return Err(CoreError::dims(
            "depth_to_space",
            format!("channels {c_in} not divisible by r^2 = {}", r * r),
        ));
    }
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let src = input.data();
    let mut data = vec![S::ZERO; n * c * oh * ow];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let ch = ci * r * r + dy * r + dx;
                    for hi in 0..h {
                        let srow = ((ni * c_in + ch) * h + hi) * w;
                        let drow = ((ni * c + ci) * oh + hi * r + dy) * ow + dx;
                        for wi in 0..w {
                            data[drow + wi * r] = src[srow + wi];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new(&[n, c, oh, ow], data))
}

/// Inverse of [`depth_to_space`].
pub fn space_to_depth<S: Scalar>(input: &Tensor<S>, r: usize) -> Result<Tensor<S>> {
    if r == 0 {
        return Err(CoreError::invalid("space_to_depth", "r must be >= 1"));
    }
    let (n, c, oh, ow) = input.dim4();
    if oh % r != 0 || ow % r != 0 {
        return Err(CoreError::dims(
            "space_to_depth",
            format!("spatial {oh}x{ow} not divisible by r = {r}"),
        ));
    }
    let (h, w) = (oh / r, ow / r);
    let c_out = c * r * r;
    let src = input.data();
    let mut data = vec![S::ZERO; n * c_out * h * w];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let ch = ci * r * r + dy * r + dx;
                    for hi in 0..h {
                        let drow = ((ni * c_out + ch) * h + hi) * w;
                        let srow = ((ni * c + ci) * oh + hi * r + dy) * ow + dx;
                        for wi in 0..w {
                            data[drow + wi] = src[srow + wi * r];
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new(&[n, c_out, h, w], data))
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

    #[test]
    fn from_vec_enforces_invariants() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::from_vec(&[2, 0], vec![]).is_err());
    }

    #[test]
    fn depth_to_space_matches_chosen_ordering() {
        // 1x4x1x1 [0,1,2,3] at r=2 -> [[0,1],[2,3]]
        let t = Tensor::from_vec(&[1, 4, 1, 1], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let out = depth_to_space(&t, 2).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.to_vec(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn depth_to_space_r1_is_identity() {
        let mut rng = Rng::new(1);
        let t = random(&[2, 3, 4, 5], &mut rng);
        let out = depth_to_space(&t, 1).unwrap();
        assert_eq!(out.to_vec(), t.to_vec());
    }

    #[test]
    fn depth_space_round_trip() {
        let mut rng = Rng::new(2);
        for r in 1..=8usize {
            let t = random(&[2, 3 * r * r, 3, 2], &mut rng);
            let back = space_to_depth(&depth_to_space(&t, r).unwrap(), r).unwrap();
            assert_eq!(back.to_vec(), t.to_vec(), "r = {r}");
            assert_eq!(back.shape(), t.shape());
        }
    }

    #[test]
    fn depth_to_space_rejects_bad_channels() {
        let t = Tensor::<f64>::zeros(&[1, 6, 2, 2]);
        assert!(depth_to_space(&t, 2).is_err());
    }

    #[test]
    fn permute_then_inverse_is_identity() {
        let mut rng = Rng::new(3);
        let t = random(&[2, 3, 4, 5], &mut rng);
        let p = t.permute(&[3, 1, 0, 2]).unwrap();
        assert_eq!(p.shape(), &[5, 3, 2, 4]);
        // inverse of [3,1,0,2] is [2,1,3,0]
        let back = p.permute(&[2, 1, 3, 0]).unwrap();
        assert_eq!(back.to_vec(), t.to_vec());
    }

    #[test]
    fn permute_agrees_with_pointwise_gather() {
        let mut rng = Rng::new(4);
        let t = random(&[2, 4, 3, 5], &mut rng);
        let p = t.permute(&[1, 3, 0, 2]).unwrap();
        for a in 0..4 {
            for b in 0..5 {
                for c in 0..2 {
                    for d in 0..3 {
                        assert_eq!(p.at4(a, b, c, d), t.at4(c, a, d, b));
                    }
                }
            }
        }
    }

    #[test]
    fn concat_slice_round_trip() {
        let mut rng = Rng::new(5);
        let a = random(&[2, 3, 2, 2], &mut rng);
        let b = random(&[2, 5, 2, 2], &mut rng);
        let joined = Tensor::concat(&[&a, &b], 1).unwrap();
        assert_eq!(joined.shape(), &[2, 8, 2, 2]);
        let a2 = joined.slice_axis(1, 0, 3).unwrap();
        let b2 = joined.slice_axis(1, 3, 5).unwrap();
        assert_eq!(a2.to_vec(), a.to_vec());
        assert_eq!(b2.to_vec(), b.to_vec());
    }

    #[test]
    fn elementwise_shape_errors() {
        let a = Tensor::<f64>::zeros(&[2, 2]);
        let b = Tensor::<f64>::zeros(&[4]);
        assert!(a.add(&b).is_err());
        assert!(a.mul(&b).is_err());
    }

    #[test]
    fn elementwise_ops_match_scalar_loops() {
        let mut rng = Rng::new(6);
        let a = random(&[3, 5], &mut rng);
        let b = random(&[3, 5], &mut rng);
        let sum = a.add(&b).unwrap();
        let prod = a.mul(&b).unwrap();
        let sig = a.sigmoid();
        let rl = a.relu();
        let sn = a.sin();
        let cs = a.cos();
        let sc = a.scale(1.3);
        for i in 0..a.numel() {
            let (x, y) = (a.data()[i], b.data()[i]);
            assert_eq!(sum.data()[i], x + y);
            assert_eq!(prod.data()[i], x * y);
            assert_eq!(sig.data()[i], 1.0 / (1.0 + (-x).exp()));
            assert_eq!(rl.data()[i], x.max(0.0));
            assert_eq!(sn.data()[i], x.sin());
            assert_eq!(cs.data()[i], x.cos());
            assert_eq!(sc.data()[i], x * 1.3);
        }
        let mut acc = 0.0;
        for &v in a.data() {
            acc += v;
        }
        assert_eq!(a.sum(), acc);
        assert_eq!(a.mean(), acc / 15.0);
    }
}
