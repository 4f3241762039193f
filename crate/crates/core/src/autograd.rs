//! Reverse-mode differentiation over the tensor kernels.
//!
//! A `Graph` records one forward computation as a flat tape; `backward`
//! walks it once in reverse creation order with a fixed accumulation
//! order, so gradients are bit-identical across runs. Graphs are
//! single-threaded builders; parameters are plain named tensors that
//! get mounted into a fresh graph every step.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashSet};
use std::rc::Rc;
use std::sync::Arc;

use crate::conv::{conv2d, conv2d_grad_input, conv2d_grad_kernel};
use crate::dft::{dft2_stacked, dft2_stacked_adjoint};
use crate::error::{CoreError, Result};
use crate::fgrep::reparameterize;
use crate::gemm::{matmul_nn, matmul_tn, transpose};
use crate::sample::{grid_sample_backward, grid_sample_bilinear};
use crate::tensor::{depth_to_space, space_to_depth, Tensor};

enum Op {
    Leaf { name: Option<String> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Sigmoid(usize),
    Sin(usize),
    Cos(usize),
    Abs(usize),
    /// [..., C] -> [..., 2C]: cos(x) in the first half of the last
    /// axis, sin(x) in the second.
    FourierPair(usize),
    Sum(usize),
    Mean(usize),
    Linear { x: usize, w: usize, bias: Option<usize> },
    AddChannelBias { x: usize, b: usize },
    AddLastDim { x: usize, b: usize },
    MulLastDim { x: usize, b: usize },
    CoordFeatures { zx: usize, zy: usize, dx: Arc<Vec<f64>>, dy: Arc<Vec<f64>> },
    Conv2d { x: usize, k: usize, pad: usize },
    DepthToSpace { x: usize, r: usize },
    SpaceToDepth { x: usize, r: usize },
    GridSample { img: usize, coords: usize },
    Dft2Stacked(usize),
    Reshape(usize),
    Permute { x: usize, inverse: Vec<usize> },
    Concat { parts: Vec<usize>, axis: usize },
    SliceAxis { x: usize, axis: usize, start: usize },
    Symmetrize(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<Node>,
    names: HashSet<String>,
}

/// A recording tape. Cheap to clone (shared handle).
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// A value on the tape.
#[derive(Clone)]
pub struct Var {
    graph: Rc<RefCell<GraphInner>>,
    id: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let mut g = self.inner.borrow_mut();
        g.nodes.push(Node { value, op, needs_grad });
        Var {
            graph: Rc::clone(&self.inner),
            id: g.nodes.len() - 1,
        }
    }

    /// A trainable leaf. Names must be unique within a graph.
    pub fn param(&self, name: &str, value: Tensor) -> Result<Var> {
        let mut g = self.inner.borrow_mut();
        if !g.names.insert(name.to_string()) {
            return Err(CoreError::invalid("param", format!("duplicate parameter name {name:?}")));
        }
        g.nodes.push(Node {
            value,
            op: Op::Leaf { name: Some(name.to_string()) },
            needs_grad: true,
        });
        Ok(Var {
            graph: Rc::clone(&self.inner),
            id: g.nodes.len() - 1,
        })
    }

    /// A non-trainable leaf.
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { name: None }, false)
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn concat(&self, parts: &[&Var], axis: usize) -> Var {
        let tensors: Vec<Tensor> = parts.iter().map(|v| v.value()).collect();
        let refs: Vec<&Tensor> = tensors.iter().collect();
        let value = Tensor::concat(&refs, axis).expect("concat");
        let needs = parts.iter().any(|v| v.needs_grad());
        self.push(
            value,
            Op::Concat { parts: parts.iter().map(|v| v.id).collect(), axis },
            needs,
        )
    }

    /// out[p, s, c] = dx[s] * zx[p, c] + dy[s] * zy[p, c]
    pub fn coord_features(&self, zx: &Var, zy: &Var, dx: Vec<f64>, dy: Vec<f64>) -> Var {
        let zxv = zx.value();
        let zyv = zy.value();
        assert_eq!(zxv.shape(), zyv.shape(), "coord_features: latent shapes differ");
        assert_eq!(zxv.rank(), 2, "coord_features: latents must be [P, C]");
        assert_eq!(dx.len(), dy.len(), "coord_features: coordinate lengths differ");
        let (p, c) = (zxv.shape()[0], zxv.shape()[1]);
        let s = dx.len();
        let mut out = vec![0.0; p * s * c];
        for pi in 0..p {
            let zxr = &zxv.data()[pi * c..(pi + 1) * c];
            let zyr = &zyv.data()[pi * c..(pi + 1) * c];
            for si in 0..s {
                let dst = &mut out[(pi * s + si) * c..(pi * s + si + 1) * c];
                let (a, b) = (dx[si], dy[si]);
                for ci in 0..c {
                    dst[ci] = a * zxr[ci] + b * zyr[ci];
                }
            }
        }
        let needs = zx.needs_grad() || zy.needs_grad();
        self.push(
            Tensor::new(&[p, s, c], out),
            Op::CoordFeatures { zx: zx.id, zy: zy.id, dx: Arc::new(dx), dy: Arc::new(dy) },
            needs,
        )
    }
}

impl Var {
    pub fn value(&self) -> Tensor {
        self.graph.borrow().nodes[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.borrow().nodes[self.id].value.shape().to_vec()
    }

    pub fn needs_grad(&self) -> bool {
        self.graph.borrow().nodes[self.id].needs_grad
    }

    fn graph_handle(&self) -> Graph {
        Graph { inner: Rc::clone(&self.graph) }
    }

    fn unary(&self, value: Tensor, op: Op) -> Var {
        let needs = self.needs_grad();
        self.graph_handle().push(value, op, needs)
    }

    fn binary(&self, other: &Var, value: Tensor, op: Op) -> Var {
        assert!(
            Rc::ptr_eq(&self.graph, &other.graph),
            "variables live on different graphs"
        );
        let needs = self.needs_grad() || other.needs_grad();
        self.graph_handle().push(value, op, needs)
    }

    pub fn add(&self, other: &Var) -> Var {
        let v = self.value().add(&other.value()).expect("add");
        self.binary(other, v, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var) -> Var {
        let v = self.value().sub(&other.value()).expect("sub");
        self.binary(other, v, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: &Var) -> Var {
        let v = self.value().mul(&other.value()).expect("mul");
        self.binary(other, v, Op::Mul(self.id, other.id))
    }

    pub fn scale(&self, s: f64) -> Var {
        self.unary(self.value().scale(s), Op::Scale(self.id, s))
    }

    pub fn add_scalar(&self, s: f64) -> Var {
        self.unary(self.value().add_scalar(s), Op::AddScalar(self.id))
    }

    pub fn relu(&self) -> Var {
        self.unary(self.value().relu(), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(self.value().sigmoid(), Op::Sigmoid(self.id))
    }

    pub fn sin(&self) -> Var {
        self.unary(self.value().sin(), Op::Sin(self.id))
    }

    pub fn cos(&self) -> Var {
        self.unary(self.value().cos(), Op::Cos(self.id))
    }

    pub fn abs(&self) -> Var {
        self.unary(self.value().abs(), Op::Abs(self.id))
    }

    /// Concatenated cos/sin of self along the last axis.
    pub fn fourier_pair(&self) -> Var {
        let xv = self.value();
        let c = *xv.shape().last().expect("fourier_pair needs an axis");
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = 2 * c;
        let mut out = vec![0.0; xv.numel() * 2];
        for (row, src) in xv.data().chunks_exact(c).enumerate() {
            let dst = &mut out[row * 2 * c..(row + 1) * 2 * c];
            for i in 0..c {
                let (s, co) = src[i].sin_cos();
                dst[i] = co;
                dst[c + i] = s;
            }
        }
        self.unary(Tensor::new(&shape, out), Op::FourierPair(self.id))
    }

    pub fn sum(&self) -> Var {
        self.unary(Tensor::scalar(self.value().sum()), Op::Sum(self.id))
    }

    pub fn mean(&self) -> Var {
        self.unary(Tensor::scalar(self.value().mean()), Op::Mean(self.id))
    }

    /// x[m,k] * w[k,n] (+ bias[n])
    pub fn linear(&self, w: &Var, bias: Option<&Var>) -> Var {
        let xv = self.value();
        let wv = w.value();
        assert_eq!(xv.rank(), 2, "linear: x must be [m, k]");
        assert_eq!(wv.rank(), 2, "linear: w must be [k, n]");
        let (m, k) = (xv.shape()[0], xv.shape()[1]);
        let (kw, n) = (wv.shape()[0], wv.shape()[1]);
        assert_eq!(k, kw, "linear: inner dims {k} vs {kw}");
        let mut out = vec![0.0; m * n];
        matmul_nn(&mut out, xv.data(), wv.data(), m, k, n);
        if let Some(b) = bias {
            let bv = b.value();
            assert_eq!(bv.shape(), &[n], "linear: bias must be [n]");
            for row in out.chunks_exact_mut(n) {
                for (o, bb) in row.iter_mut().zip(bv.data()) {
                    *o += bb;
                }
            }
        }
        let needs = self.needs_grad()
            || w.needs_grad()
            || bias.map(|b| b.needs_grad()).unwrap_or(false);
        self.graph_handle().push(
            Tensor::new(&[m, n], out),
            Op::Linear { x: self.id, w: w.id, bias: bias.map(|b| b.id) },
            needs,
        )
    }

    /// [N,C,H,W] + bias[C]
    pub fn add_channel_bias(&self, b: &Var) -> Var {
        let xv = self.value();
        let bv = b.value();
        let (_, c, h, w) = xv.dim4();
        assert_eq!(bv.shape(), &[c], "add_channel_bias: bias must be [C]");
        let plane = h * w;
        let mut out = xv.to_vec();
        for (ci, chunk) in out.chunks_exact_mut(plane).enumerate() {
            let bb = bv.data()[ci % c];
            for v in chunk {
                *v += bb;
            }
        }
        let v = Tensor::new(xv.shape(), out);
        self.binary(b, v, Op::AddChannelBias { x: self.id, b: b.id })
    }

    /// [..., C] + bias[C]
    pub fn add_last(&self, b: &Var) -> Var {
        let xv = self.value();
        let bv = b.value();
        let c = *xv.shape().last().unwrap();
        assert_eq!(bv.shape(), &[c], "add_last: bias must be [C]");
        let mut out = xv.to_vec();
        for chunk in out.chunks_exact_mut(c) {
            for (o, bb) in chunk.iter_mut().zip(bv.data()) {
                *o += bb;
            }
        }
        let v = Tensor::new(xv.shape(), out);
        self.binary(b, v, Op::AddLastDim { x: self.id, b: b.id })
    }

    /// [..., C] * weights[C]
    pub fn mul_last(&self, b: &Var) -> Var {
        let xv = self.value();
        let bv = b.value();
        let c = *xv.shape().last().unwrap();
        assert_eq!(bv.shape(), &[c], "mul_last: weights must be [C]");
        let mut out = xv.to_vec();
        for chunk in out.chunks_exact_mut(c) {
            for (o, bb) in chunk.iter_mut().zip(bv.data()) {
                *o *= *bb;
            }
        }
        let v = Tensor::new(xv.shape(), out);
        self.binary(b, v, Op::MulLastDim { x: self.id, b: b.id })
    }

    pub fn conv2d(&self, kernel: &Var, pad: usize) -> Var {
        let v = conv2d(&self.value(), &kernel.value(), pad).expect("conv2d");
        self.binary(kernel, v, Op::Conv2d { x: self.id, k: kernel.id, pad })
    }

    pub fn depth_to_space(&self, r: usize) -> Var {
        let v = depth_to_space(&self.value(), r).expect("depth_to_space");
        self.unary(v, Op::DepthToSpace { x: self.id, r })
    }

    pub fn space_to_depth(&self, r: usize) -> Var {
        let v = space_to_depth(&self.value(), r).expect("space_to_depth");
        self.unary(v, Op::SpaceToDepth { x: self.id, r })
    }

    /// self is the image, `coords` the per-channel sample positions.
    pub fn grid_sample(&self, coords: &Var) -> Var {
        let v = grid_sample_bilinear(&self.value(), &coords.value()).expect("grid_sample");
        self.binary(coords, v, Op::GridSample { img: self.id, coords: coords.id })
    }

    pub fn dft2_stacked(&self) -> Var {
        let v = dft2_stacked(&self.value()).expect("dft2");
        self.unary(v, Op::Dft2Stacked(self.id))
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let v = self.value().reshape(shape).expect("reshape");
        self.unary(v, Op::Reshape(self.id))
    }

    pub fn permute(&self, axes: &[usize]) -> Var {
        let v = self.value().permute(axes).expect("permute");
        let mut inverse = vec![0usize; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.unary(v, Op::Permute { x: self.id, inverse })
    }

    pub fn slice_axis(&self, axis: usize, start: usize, len: usize) -> Var {
        let v = self.value().slice_axis(axis, start, len).expect("slice");
        self.unary(v, Op::SliceAxis { x: self.id, axis, start })
    }

    /// Averages a kernel over the eight dihedral transforms.
    pub fn symmetrize(&self) -> Var {
        let v = reparameterize(&self.value()).expect("symmetrize");
        self.unary(v, Op::Symmetrize(self.id))
    }
}

/// Runs reverse-mode accumulation from a scalar loss. Returns the
/// gradient for every named parameter on the graph; parameters the
/// loss does not reach get zero gradients.
pub fn backward(loss: &Var) -> Result<BTreeMap<String, Tensor>> {
    let g = loss.graph.borrow();
    let nodes = &g.nodes;
    let loss_node = &nodes[loss.id];
    if loss_node.value.numel() != 1 {
        return Err(CoreError::invalid(
            "backward",
            format!("loss must be scalar, got shape {:?}", loss_node.value.shape()),
        ));
    }
    let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
    grads[loss.id] = Some(Tensor::scalar(1.0));

    // Accumulate into a parent slot, in fixed visit order.
    fn feed(grads: &mut [Option<Tensor>], nodes: &[Node], id: usize, delta: Tensor) {
        if !nodes[id].needs_grad {
            return;
        }
        grads[id] = Some(match grads[id].take() {
            None => delta,
            Some(g) => g.add(&delta).expect("gradient accumulation"),
        });
    }

    for id in (0..=loss.id).rev() {
        if !nodes[id].needs_grad {
            grads[id] = None;
            continue;
        }
        let Some(gout) = grads[id].take() else { continue };
        match &nodes[id].op {
            Op::Leaf { .. } => {
                grads[id] = Some(gout);
            }
            Op::Add(a, b) => {
                feed(&mut grads, nodes, *a, gout.clone());
                feed(&mut grads, nodes, *b, gout);
            }
            Op::Sub(a, b) => {
                feed(&mut grads, nodes, *a, gout.clone());
                feed(&mut grads, nodes, *b, gout.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let av = &nodes[*a].value;
                let bv = &nodes[*b].value;
                feed(&mut grads, nodes, *a, gout.mul(bv)?);
                feed(&mut grads, nodes, *b, gout.mul(av)?);
            }
            Op::Scale(a, s) => feed(&mut grads, nodes, *a, gout.scale(*s)),
            Op::AddScalar(a) => feed(&mut grads, nodes, *a, gout),
            Op::Relu(a) => {
                let dx = nodes[*a]
                    .value
                    .zip(&gout, "relu_bwd", |x, g| if x > 0.0 { g } else { 0.0 })?;
                feed(&mut grads, nodes, *a, dx);
            }
            Op::Sigmoid(a) => {
                let y = &nodes[id].value;
                let dx = y.zip(&gout, "sigmoid_bwd", |y, g| g * y * (1.0 - y))?;
                feed(&mut grads, nodes, *a, dx);
            }
            Op::Sin(a) => {
                let dx = nodes[*a].value.zip(&gout, "sin_bwd", |x, g| g * x.cos())?;
                feed(&mut grads, nodes, *a, dx);
            }
            Op::Cos(a) => {
                let dx = nodes[*a].value.zip(&gout, "cos_bwd", |x, g| -g * x.sin())?;
                feed(&mut grads, nodes, *a, dx);
            }
            Op::Abs(a) => {
                // Subgradient 0 at the kink.
                let dx = nodes[*a].value.zip(&gout, "abs_bwd", |x, g| {
                    if x > 0.0 {
                        g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })?;
                feed(&mut grads, nodes, *a, dx);
            }
            Op::FourierPair(a) => {
                // gout is [..., 2C]: cos cotangents then sin cotangents.
                let xv = &nodes[*a].value;
                let c = *xv.shape().last().unwrap();
                let g = gout.data();
                let mut dx = vec![0.0; xv.numel()];
                for (row, chunk) in dx.chunks_exact_mut(c).enumerate() {
                    let gc = &g[row * 2 * c..row * 2 * c + c];
                    let gs = &g[row * 2 * c + c..(row + 1) * 2 * c];
                    for i in 0..c {
                        let (s, co) = xv.data()[row * c + i].sin_cos();
                        chunk[i] = -s * gc[i] + co * gs[i];
                    }
                }
                feed(&mut grads, nodes, *a, Tensor::new(xv.shape(), dx));
            }
            Op::Sum(a) => {
                let s = gout.data()[0];
                feed(&mut grads, nodes, *a, Tensor::full(nodes[*a].value.shape(), s));
            }
            Op::Mean(a) => {
                let s = gout.data()[0] / nodes[*a].value.numel() as f64;
                feed(&mut grads, nodes, *a, Tensor::full(nodes[*a].value.shape(), s));
            }
            Op::Linear { x, w, bias } => {
                let xv = &nodes[*x].value;
                let wv = &nodes[*w].value;
                let (m, k) = (xv.shape()[0], xv.shape()[1]);
                let n = wv.shape()[1];
                if nodes[*x].needs_grad {
                    // dx = g * w^T; transpose the small weight matrix so
                    // the contiguous-b kernel does the heavy lifting.
                    let mut wt = vec![0.0; k * n];
                    transpose(&mut wt, wv.data(), k, n);
                    let mut dx = vec![0.0; m * k];
                    matmul_nn(&mut dx, gout.data(), &wt, m, n, k);
                    feed(&mut grads, nodes, *x, Tensor::new(&[m, k], dx));
                }
                if nodes[*w].needs_grad {
                    let mut dw = vec![0.0; k * n];
                    matmul_tn(&mut dw, xv.data(), gout.data(), k, m, n);
                    feed(&mut grads, nodes, *w, Tensor::new(&[k, n], dw));
                }
                if let Some(b) = bias {
                    if nodes[*b].needs_grad {
                        let mut db = vec![0.0; n];
                        for row in gout.data().chunks_exact(n) {
                            for (d, gv) in db.iter_mut().zip(row) {
                                *d += gv;
                            }
                        }
                        feed(&mut grads, nodes, *b, Tensor::new(&[n], db));
                    }
                }
            }
            Op::AddChannelBias { x, b } => {
                if nodes[*b].needs_grad {
                    let (n, c, h, w) = nodes[*x].value.dim4();
                    let mut db = vec![0.0; c];
                    let plane = h * w;
                    for ni in 0..n {
                        for ci in 0..c {
                            let s: f64 =
                                gout.data()[(ni * c + ci) * plane..][..plane].iter().sum();
                            db[ci] += s;
                        }
                    }
                    feed(&mut grads, nodes, *b, Tensor::new(&[c], db));
                }
                feed(&mut grads, nodes, *x, gout);
            }
            Op::AddLastDim { x, b } => {
                if nodes[*b].needs_grad {
                    let c = *nodes[*x].value.shape().last().unwrap();
                    let mut db = vec![0.0; c];
                    for chunk in gout.data().chunks_exact(c) {
                        for (d, gv) in db.iter_mut().zip(chunk) {
                            *d += gv;
                        }
                    }
                    feed(&mut grads, nodes, *b, Tensor::new(&[c], db));
                }
                feed(&mut grads, nodes, *x, gout);
            }
            Op::MulLastDim { x, b } => {
                let xv = &nodes[*x].value;
                let bv = &nodes[*b].value;
                let c = *xv.shape().last().unwrap();
                if nodes[*b].needs_grad {
                    let mut db = vec![0.0; c];
                    for (chunk, xchunk) in
                        gout.data().chunks_exact(c).zip(xv.data().chunks_exact(c))
                    {
                        for ci in 0..c {
                            db[ci] += chunk[ci] * xchunk[ci];
                        }
                    }
                    feed(&mut grads, nodes, *b, Tensor::new(&[c], db));
                }
                if nodes[*x].needs_grad {
                    let mut dx = gout.to_vec();
                    for chunk in dx.chunks_exact_mut(c) {
                        for (v, bb) in chunk.iter_mut().zip(bv.data()) {
                            *v *= *bb;
                        }
                    }
                    feed(&mut grads, nodes, *x, Tensor::new(xv.shape(), dx));
                }
            }
            Op::CoordFeatures { zx, zy, dx, dy } => {
                let (p, c) = {
                    let sh = nodes[*zx].value.shape();
                    (sh[0], sh[1])
                };
                let s = dx.len();
                let mut dzx = vec![0.0; p * c];
                let mut dzy = vec![0.0; p * c];
                for pi in 0..p {
                    for si in 0..s {
                        let gr = &gout.data()[(pi * s + si) * c..(pi * s + si + 1) * c];
                        let (a, b) = (dx[si], dy[si]);
                        let zr = &mut dzx[pi * c..(pi + 1) * c];
                        for ci in 0..c {
                            zr[ci] += a * gr[ci];
                        }
                        let zr = &mut dzy[pi * c..(pi + 1) * c];
                        for ci in 0..c {
                            zr[ci] += b * gr[ci];
                        }
                    }
                }
                feed(&mut grads, nodes, *zx, Tensor::new(&[p, c], dzx));
                feed(&mut grads, nodes, *zy, Tensor::new(&[p, c], dzy));
            }
            Op::Conv2d { x, k, pad } => {
                if nodes[*x].needs_grad {
                    feed(&mut grads, nodes, *x, conv2d_grad_input(&gout, &nodes[*k].value)?);
                }
                if nodes[*k].needs_grad {
                    let (c_out, _, kk, _) = nodes[*k].value.dim4();
                    feed(
                        &mut grads,
                        nodes,
                        *k,
                        conv2d_grad_kernel(&gout, &nodes[*x].value, c_out, kk, *pad)?,
                    );
                }
            }
            Op::DepthToSpace { x, r } => {
                feed(&mut grads, nodes, *x, space_to_depth(&gout, *r)?);
            }
            Op::SpaceToDepth { x, r } => {
                feed(&mut grads, nodes, *x, depth_to_space(&gout, *r)?);
            }
            Op::GridSample { img, coords } => {
                let (d_img, d_crd) =
                    grid_sample_backward(&gout, &nodes[*img].value, &nodes[*coords].value)?;
                feed(&mut grads, nodes, *img, d_img);
                feed(&mut grads, nodes, *coords, d_crd);
            }
            Op::Dft2Stacked(x) => {
                feed(&mut grads, nodes, *x, dft2_stacked_adjoint(&gout)?);
            }
            Op::Reshape(x) => {
                feed(&mut grads, nodes, *x, gout.reshape(nodes[*x].value.shape())?);
            }
            Op::Permute { x, inverse } => {
                feed(&mut grads, nodes, *x, gout.permute(inverse)?);
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let len = nodes[p].value.shape()[*axis];
                    feed(&mut grads, nodes, p, gout.slice_axis(*axis, offset, len)?);
                    offset += len;
                }
            }
            Op::SliceAxis { x, axis, start } => {
                // Scatter the slice gradient into a zero tensor.
                let full = &nodes[*x].value;
                let mut dx = vec![0.0; full.numel()];
                let out_shape = nodes[id].value.shape().to_vec();
                let outer: usize = full.shape()[..*axis].iter().product();
                let inner: usize = full.shape()[*axis + 1..].iter().product();
                let full_ext = full.shape()[*axis];
                let len = out_shape[*axis];
                for o in 0..outer {
                    let src = &gout.data()[o * len * inner..(o + 1) * len * inner];
                    let dst = &mut dx[(o * full_ext + start) * inner..][..len * inner];
                    dst.copy_from_slice(src);
                }
                feed(&mut grads, nodes, *x, Tensor::new(full.shape(), dx));
            }
            Op::Symmetrize(x) => {
                // The transform average is self-adjoint: the group is
                // closed under inverses.
                feed(&mut grads, nodes, *x, reparameterize(&gout)?);
            }
        }
    }

    let mut out = BTreeMap::new();
    for (i, node) in nodes.iter().enumerate() {
        if let Op::Leaf { name: Some(name) } = &node.op {
            let g = match grads.get_mut(i).and_then(|g| g.take()) {
                Some(g) => g,
                None => Tensor::zeros(node.value.shape()),
            };
            out.insert(name.clone(), g);
        }
    }
    Ok(out)
}
