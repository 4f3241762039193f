//! The scale-conditioned filter generator.
//!
//! An integer scale r picks r x r sub-pixel center coordinates in
//! [-1, 1] and a size signal 2/r. Coordinates are projected against
//! learned per-tap latents, combined with the size head, and expanded
//! into Fourier features that an MLP (1x1-conv style, positionwise)
//! maps to filter values. A fixed reshape lays the positions out as a
//! conv kernel whose output channels follow the depth-to-space
//! ordering: channel = feature * r^2 + dy * r + dx.

use std::collections::BTreeMap;

use igkit_core::autograd::{Graph, Var};
use igkit_core::{CoreError, Result, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HyperNetCfg {
    /// Encoder channels the generated filters consume.
    pub ce: usize,
    /// Kernel side (odd).
    pub k: usize,
    /// Fourier feature width (even); also the MLP width.
    pub ch: usize,
    /// Hidden layers in the MLP.
    pub hidden_layers: usize,
    /// Values predicted per (tap, sub-pixel) position: 3 for the
    /// reconstruction head, 12 for the sampling head.
    pub out_width: usize,
}

impl HyperNetCfg {
    pub fn reconstruction(ce: usize) -> Self {
        HyperNetCfg { ce, k: 3, ch: 256, hidden_layers: 4, out_width: 3 }
    }

    pub fn sampling(ce: usize) -> Self {
        HyperNetCfg { ce, k: 3, ch: 128, hidden_layers: 2, out_width: 12 }
    }

    pub fn taps(&self) -> usize {
        self.ce * self.k * self.k
    }

    fn validate(&self) -> Result<()> {
        if self.ch % 2 != 0 {
            return Err(CoreError::invalid("hypernet", format!("ch {} must be even", self.ch)));
        }
        if self.k % 2 == 0 {
            return Err(CoreError::invalid("hypernet", format!("k {} must be odd", self.k)));
        }
        Ok(())
    }
}

/// Sub-pixel center coordinates for scale r: delta_i = (2i+1)/r - 1.
/// Returned as two [1, r, r, 1] grids; x varies along the fast axis.
pub fn coordinate_grid(r: usize) -> Result<(Tensor, Tensor)> {
    if r < 1 {
        return Err(CoreError::invalid("coordinate_grid", "r must be >= 1"));
    }
    let (dx, dy) = coord_vectors(r);
    Ok((
        Tensor::from_vec(&[1, r, r, 1], dx)?,
        Tensor::from_vec(&[1, r, r, 1], dy)?,
    ))
}

/// Flattened coordinate vectors over s = dy * r + dx.
pub fn coord_vectors(r: usize) -> (Vec<f64>, Vec<f64>) {
    let delta = |i: usize| (2 * i + 1) as f64 / r as f64 - 1.0;
    let mut dx = Vec::with_capacity(r * r);
    let mut dy = Vec::with_capacity(r * r);
    for y in 0..r {
        for x in 0..r {
            dx.push(delta(x));
            dy.push(delta(y));
        }
    }
    (dx, dy)
}

/// Learned parameters.
#[derive(Clone, Debug)]
pub struct HyperNet {
    pub cfg: HyperNetCfg,
    pub zx: Tensor,
    pub zy: Tensor,
    pub zamp: Tensor,
    /// Size head (single linear layer on the scalar 2/r).
    pub ws: Tensor,
    pub bs: Tensor,
    /// Hidden layers, each ch -> ch.
    pub hidden: Vec<(Tensor, Tensor)>,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl HyperNet {
    pub fn init(cfg: HyperNetCfg, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let taps = cfg.taps();
        let half = cfg.ch / 2;
        let gaussian = |rng: &mut Rng, shape: &[usize], std: f64| {
            let mut data = vec![0.0; shape.iter().product()];
            rng.fill_normal(&mut data, std);
            Tensor::from_vec(shape, data).expect("init shape")
        };
        let kaiming = |rng: &mut Rng, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let mut w = vec![0.0; fan_in * fan_out];
            rng.fill_uniform(&mut w, -bound, bound);
            let bb = 1.0 / (fan_in as f64).sqrt();
            let mut b = vec![0.0; fan_out];
            rng.fill_uniform(&mut b, -bb, bb);
            (
                Tensor::from_vec(&[fan_in, fan_out], w).expect("w shape"),
                Tensor::from_vec(&[fan_out], b).expect("b shape"),
            )
        };
        let zx = gaussian(rng, &[taps, half], 1.0);
        let zy = gaussian(rng, &[taps, half], 1.0);
        let zamp = gaussian(rng, &[cfg.ch], 1.0);
        // Size head starts inert so s_r = 0 initially.
        let ws = Tensor::zeros(&[half]);
        let bs = Tensor::zeros(&[half]);
        let mut hidden = Vec::with_capacity(cfg.hidden_layers);
        for _ in 0..cfg.hidden_layers {
            hidden.push(kaiming(rng, cfg.ch, cfg.ch));
        }
        // Final layer scaled down so initial filters are small.
        let damp = 1.0 / (cfg.k as f64 * (cfg.ce as f64).sqrt());
        let (w_raw, _) = kaiming(rng, cfg.ch, cfg.out_width);
        let w_out = w_raw.scale(damp);
        let b_out = Tensor::zeros(&[cfg.out_width]);
        Ok(HyperNet { cfg, zx, zy, zamp, ws, bs, hidden, w_out, b_out })
    }

    /// All-zero parameters; generates exactly zero filters.
    pub fn zeroed(cfg: HyperNetCfg) -> Result<Self> {
        cfg.validate()?;
        let taps = cfg.taps();
        let half = cfg.ch / 2;
        Ok(HyperNet {
            cfg,
            zx: Tensor::zeros(&[taps, half]),
            zy: Tensor::zeros(&[taps, half]),
            zamp: Tensor::zeros(&[cfg.ch]),
            ws: Tensor::zeros(&[half]),
            bs: Tensor::zeros(&[half]),
            hidden: (0..cfg.hidden_layers)
                .map(|_| (Tensor::zeros(&[cfg.ch, cfg.ch]), Tensor::zeros(&[cfg.ch])))
                .collect(),
            w_out: Tensor::zeros(&[cfg.ch, cfg.out_width]),
            b_out: Tensor::zeros(&[cfg.out_width]),
        })
    }

    pub fn param_count(&self) -> usize {
        let mut n = self.zx.numel() + self.zy.numel() + self.zamp.numel();
        n += self.ws.numel() + self.bs.numel();
        for (w, b) in &self.hidden {
            n += w.numel() + b.numel();
        }
        n + self.w_out.numel() + self.b_out.numel()
    }

    pub fn state_dict(&self, prefix: &str, out: &mut BTreeMap<String, Tensor>) {
        out.insert(format!("{prefix}.zx"), self.zx.clone());
        out.insert(format!("{prefix}.zy"), self.zy.clone());
        out.insert(format!("{prefix}.zamp"), self.zamp.clone());
        out.insert(format!("{prefix}.size.w"), self.ws.clone());
        out.insert(format!("{prefix}.size.b"), self.bs.clone());
        for (i, (w, b)) in self.hidden.iter().enumerate() {
            out.insert(format!("{prefix}.f{i}.w"), w.clone());
            out.insert(format!("{prefix}.f{i}.b"), b.clone());
        }
        out.insert(format!("{prefix}.out.w"), self.w_out.clone());
        out.insert(format!("{prefix}.out.b"), self.b_out.clone());
    }

    pub fn from_state(
        cfg: HyperNetCfg,
        prefix: &str,
        dict: &BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        cfg.validate()?;
        let get = |name: String| -> Result<Tensor> {
            dict.get(&name)
                .cloned()
                .ok_or_else(|| CoreError::invalid("checkpoint", format!("missing tensor {name:?}")))
        };
        let mut hidden = Vec::with_capacity(cfg.hidden_layers);
        for i in 0..cfg.hidden_layers {
            hidden.push((get(format!("{prefix}.f{i}.w"))?, get(format!("{prefix}.f{i}.b"))?));
        }
        Ok(HyperNet {
            cfg,
            zx: get(format!("{prefix}.zx"))?,
            zy: get(format!("{prefix}.zy"))?,
            zamp: get(format!("{prefix}.zamp"))?,
            ws: get(format!("{prefix}.size.w"))?,
            bs: get(format!("{prefix}.size.b"))?,
            hidden,
            w_out: get(format!("{prefix}.out.w"))?,
            b_out: get(format!("{prefix}.out.b"))?,
        })
    }

    /// Registers the parameters on a graph. Trainable mounts name the
    /// leaves `{prefix}.*`; frozen mounts use constants.
    pub fn mount(&self, g: &Graph, prefix: &str, trainable: bool) -> Result<HyperNetVars> {
        let leaf = |g: &Graph, name: String, t: &Tensor| -> Result<Var> {
            if trainable {
                g.param(&name, t.clone())
            } else {
                Ok(g.constant(t.clone()))
            }
        };
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for (i, (w, b)) in self.hidden.iter().enumerate() {
            hidden.push((
                leaf(g, format!("{prefix}.f{i}.w"), w)?,
                leaf(g, format!("{prefix}.f{i}.b"), b)?,
            ));
        }
        Ok(HyperNetVars {
            cfg: self.cfg,
            zx: leaf(g, format!("{prefix}.zx"), &self.zx)?,
            zy: leaf(g, format!("{prefix}.zy"), &self.zy)?,
            zamp: leaf(g, format!("{prefix}.zamp"), &self.zamp)?,
            ws: leaf(g, format!("{prefix}.size.w"), &self.ws)?,
            bs: leaf(g, format!("{prefix}.size.b"), &self.bs)?,
            hidden,
            w_out: leaf(g, format!("{prefix}.out.w"), &self.w_out)?,
            b_out: leaf(g, format!("{prefix}.out.b"), &self.b_out)?,
        })
    }

    /// Generated reconstruction kernel `[out_width*r^2, ce, k, k]` with
    /// no graph attached (deployment path).
    pub fn filters_tensor(&self, r: usize, size_input: Option<f64>, fgrep: bool) -> Result<Tensor> {
        let g = Graph::new();
        let vars = self.mount(&g, "h", false)?;
        Ok(vars.filters(&g, r, size_input, fgrep)?.value())
    }

    /// Generated sampling kernels (direction, scope), each
    /// `[6r^2, ce, k, k]`, no graph attached.
    pub fn sampling_filters_tensor(
        &self,
        r: usize,
        size_input: Option<f64>,
        fgrep: bool,
    ) -> Result<(Tensor, Tensor)> {
        let g = Graph::new();
        let vars = self.mount(&g, "hs", false)?;
        let (ko, ks) = vars.sampling_filters(&g, r, size_input, fgrep)?;
        Ok((ko.value(), ks.value()))
    }
}

/// Graph-mounted parameters.
pub struct HyperNetVars {
    pub cfg: HyperNetCfg,
    zx: Var,
    zy: Var,
    zamp: Var,
    ws: Var,
    bs: Var,
    hidden: Vec<(Var, Var)>,
    w_out: Var,
    b_out: Var,
}

impl HyperNetVars {
    /// Fourier features `[taps, r^2, ch]` for scale r. `size_input`
    /// overrides the 2/r fed to the size head (the arbitrary-scale path
    /// feeds 2/r_float while coordinates stay at the ceiling integer).
    pub fn fourier_features(&self, g: &Graph, r: usize, size_input: Option<f64>) -> Result<Var> {
        if r < 1 {
            return Err(CoreError::invalid("fourier_features", "r must be >= 1"));
        }
        let (dx, dy) = coord_vectors(r);
        let coords = g.coord_features(&self.zx, &self.zy, dx, dy);
        let s_in = size_input.unwrap_or(2.0 / r as f64);
        let s_vec = self.ws.scale(s_in).add(&self.bs);
        let phase = coords.add_last(&s_vec).scale(std::f64::consts::PI);
        Ok(phase.fourier_pair().mul_last(&self.zamp))
    }

    /// Positionwise MLP output `[taps*r^2, out_width]`.
    pub fn raw_output(&self, g: &Graph, r: usize, size_input: Option<f64>) -> Result<Var> {
        let four = self.fourier_features(g, r, size_input)?;
        let taps = self.cfg.taps();
        let mut h = four.reshape(&[taps * r * r, self.cfg.ch]);
        for (w, b) in &self.hidden {
            h = h.linear(w, Some(b)).relu();
        }
        Ok(h.linear(&self.w_out, Some(&self.b_out)))
    }

    /// Lays `[taps*r^2, features]` out as a conv kernel
    /// `[features*r^2, ce, k, k]` with output channel
    /// `feature*r^2 + dy*r + dx`.
    fn reshape_to_kernel(&self, raw: &Var, r: usize, features: usize) -> Var {
        let (ce, k) = (self.cfg.ce, self.cfg.k);
        raw.reshape(&[ce, k, k, r, r, features])
            .permute(&[5, 3, 4, 0, 1, 2])
            .reshape(&[features * r * r, ce, k, k])
    }

    /// Reconstruction kernel `[3r^2, ce, k, k]` (transform-averaged when
    /// `fgrep` is on). Requires a reconstruction-flavored net.
    pub fn filters(&self, g: &Graph, r: usize, size_input: Option<f64>, fgrep: bool) -> Result<Var> {
        if self.cfg.out_width != 3 {
            return Err(CoreError::invalid(
                "generate_filters",
                format!("needs a reconstruction head (out_width 3), got {}", self.cfg.out_width),
            ));
        }
        let raw = self.raw_output(g, r, size_input)?;
        let kernel = self.reshape_to_kernel(&raw, r, 3);
        Ok(if fgrep { kernel.symmetrize() } else { kernel })
    }

    /// Direction and scope kernels, each `[6r^2, ce, k, k]`, split from
    /// the first and last 6 of the 12 predicted features.
    pub fn sampling_filters(
        &self,
        g: &Graph,
        r: usize,
        size_input: Option<f64>,
        fgrep: bool,
    ) -> Result<(Var, Var)> {
        if self.cfg.out_width != 12 {
            return Err(CoreError::invalid(
                "generate_sampling_filters",
                format!("needs a sampling head (out_width 12), got {}", self.cfg.out_width),
            ));
        }
        let raw = self.raw_output(g, r, size_input)?;
        let dir = raw.slice_axis(1, 0, 6);
        let sco = raw.slice_axis(1, 6, 6);
        let ko = self.reshape_to_kernel(&dir, r, 6);
        let ks = self.reshape_to_kernel(&sco, r, 6);
        Ok(if fgrep {
            (ko.symmetrize(), ks.symmetrize())
        } else {
            (ko, ks)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_grid_matches_cell_centers() {
        let (dx, _) = coordinate_grid(1).unwrap();
        assert_eq!(dx.to_vec(), vec![0.0]);
        let (dx, dy) = coordinate_grid(2).unwrap();
        assert_eq!(dx.to_vec(), vec![-0.5, 0.5, -0.5, 0.5]);
        assert_eq!(dy.to_vec(), vec![-0.5, -0.5, 0.5, 0.5]);
        let (dx, _) = coordinate_grid(4).unwrap();
        assert_eq!(&dx.to_vec()[..4], &[-0.75, -0.25, 0.25, 0.75]);
        assert!(coordinate_grid(0).is_err());
    }

    #[test]
    fn inert_latents_make_pure_cosine_features() {
        // zx = zy = 0 and a unit amplitude leave cos(0) = 1, sin(0) = 0.
        let cfg = HyperNetCfg { ce: 2, k: 3, ch: 8, hidden_layers: 1, out_width: 3 };
        let mut net = HyperNet::zeroed(cfg).unwrap();
        net.zamp = Tensor::full(&[8], 1.0);
        for r in [1usize, 2, 3] {
            let g = Graph::new();
            let vars = net.mount(&g, "h", false).unwrap();
            let f = vars.fourier_features(&g, r, None).unwrap().value();
            assert_eq!(f.shape(), &[18, r * r, 8]);
            for pos in f.data().chunks_exact(8) {
                assert_eq!(&pos[..4], &[1.0; 4], "cos half");
                assert_eq!(&pos[4..], &[0.0; 4], "sin half");
            }
        }
    }

    #[test]
    fn size_head_receives_two_over_r() {
        // With ws = 1-vector and zeroed latents the phase is pi * 2/r,
        // so the cos half reads cos(2 pi / r).
        let cfg = HyperNetCfg { ce: 1, k: 1, ch: 2, hidden_layers: 0, out_width: 3 };
        let mut net = HyperNet::zeroed(cfg).unwrap();
        net.ws = Tensor::full(&[1], 1.0);
        net.zamp = Tensor::full(&[2], 1.0);
        for r in [2usize, 4] {
            let g = Graph::new();
            let vars = net.mount(&g, "h", false).unwrap();
            let f = vars.fourier_features(&g, r, None).unwrap().value();
            let want = (std::f64::consts::PI * 2.0 / r as f64).cos();
            for pos in f.data().chunks_exact(2) {
                assert!((pos[0] - want).abs() < 1e-12, "r={r}: {} vs {want}", pos[0]);
            }
        }
    }

    #[test]
    fn filter_shapes_follow_scale() {
        let mut rng = Rng::new(200);
        let cfg = HyperNetCfg { ce: 8, k: 3, ch: 16, hidden_layers: 2, out_width: 3 };
        let net = HyperNet::init(cfg, &mut rng).unwrap();
        let k2 = net.filters_tensor(2, None, false).unwrap();
        assert_eq!(k2.shape(), &[12, 8, 3, 3]);
        let k1 = net.filters_tensor(1, None, false).unwrap();
        assert_eq!(k1.shape(), &[3, 8, 3, 3]);
    }

    #[test]
    fn sampling_head_shapes_and_zero_network() {
        let cfg = HyperNetCfg { ce: 8, k: 3, ch: 16, hidden_layers: 2, out_width: 12 };
        let net = HyperNet::zeroed(cfg).unwrap();
        let (ko, ks) = net.sampling_filters_tensor(2, None, false).unwrap();
        assert_eq!(ko.shape(), &[24, 8, 3, 3]);
        assert_eq!(ks.shape(), &[24, 8, 3, 3]);
        assert!(ko.data().iter().all(|&v| v == 0.0));
        assert!(ks.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_head_flavor_is_rejected() {
        let mut rng = Rng::new(201);
        let rec = HyperNet::init(HyperNetCfg { ce: 2, k: 3, ch: 8, hidden_layers: 1, out_width: 3 }, &mut rng).unwrap();
        let g = Graph::new();
        let vars = rec.mount(&g, "h", false).unwrap();
        assert!(vars.sampling_filters(&g, 2, None, false).is_err());
        let smp = HyperNet::init(HyperNetCfg { ce: 2, k: 3, ch: 8, hidden_layers: 1, out_width: 12 }, &mut rng).unwrap();
        let g = Graph::new();
        let vars = smp.mount(&g, "hs", false).unwrap();
        assert!(vars.filters(&g, 2, None, false).is_err());
    }

    /// Direct scalar evaluation of the coefficient pipeline.
    fn fourier_oracle(net: &HyperNet, r: usize) -> Vec<f64> {
        let cfg = net.cfg;
        let taps = cfg.taps();
        let half = cfg.ch / 2;
        let (dx, dy) = coord_vectors(r);
        let s_in = 2.0 / r as f64;
        let mut out = vec![0.0; taps * r * r * cfg.ch];
        for p in 0..taps {
            for s in 0..r * r {
                for c in 0..cfg.ch {
                    let (phase_c, amp) = if c < half {
                        (c, net.zamp.data()[c])
                    } else {
                        (c - half, net.zamp.data()[c])
                    };
                    let cr = dx[s] * net.zx.data()[p * half + phase_c]
                        + dy[s] * net.zy.data()[p * half + phase_c];
                    let sr = net.ws.data()[phase_c] * s_in + net.bs.data()[phase_c];
                    let ang = std::f64::consts::PI * (cr + sr);
                    let v = if c < half { ang.cos() } else { ang.sin() };
                    out[(p * r * r + s) * cfg.ch + c] = amp * v;
                }
            }
        }
        out
    }

    #[test]
    fn fourier_features_match_scalar_oracle() {
        let mut rng = Rng::new(202);
        let cfg = HyperNetCfg { ce: 2, k: 3, ch: 12, hidden_layers: 1, out_width: 3 };
        let net = HyperNet::init(cfg, &mut rng).unwrap();
        let g = Graph::new();
        let vars = net.mount(&g, "h", false).unwrap();
        let got = vars.fourier_features(&g, 3, None).unwrap().value();
        let want = fourier_oracle(&net, 3);
        assert_eq!(got.numel(), want.len());
        for (a, b) in got.data().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn kernel_reshape_is_a_bijection() {
        // Flattening the kernel back must recover the raw MLP output.
        let mut rng = Rng::new(203);
        let cfg = HyperNetCfg { ce: 2, k: 3, ch: 8, hidden_layers: 1, out_width: 3 };
        let net = HyperNet::init(cfg, &mut rng).unwrap();
        let r = 2;
        let g = Graph::new();
        let vars = net.mount(&g, "h", false).unwrap();
        let raw = vars.raw_output(&g, r, None).unwrap().value();
        let kernel = net.filters_tensor(r, None, false).unwrap();
        let taps = cfg.taps();
        for p in 0..taps {
            let (ce_i, rem) = (p / 9, p % 9);
            let (i, j) = (rem / 3, rem % 3);
            for s in 0..r * r {
                let (dy, dx) = (s / r, s % r);
                for color in 0..3 {
                    let want = raw.data()[(p * r * r + s) * 3 + color];
                    let got = kernel.at4(color * r * r + dy * r + dx, ce_i, i, j);
                    assert_eq!(got.to_bits(), want.to_bits());
                }
            }
        }
    }

    #[test]
    fn split_then_reconcat_recovers_raw_sampling_output() {
        let mut rng = Rng::new(204);
        let cfg = HyperNetCfg { ce: 2, k: 3, ch: 8, hidden_layers: 1, out_width: 12 };
        let net = HyperNet::init(cfg, &mut rng).unwrap();
        let g = Graph::new();
        let vars = net.mount(&g, "hs", false).unwrap();
        let raw = vars.raw_output(&g, 2, None).unwrap();
        let dir = raw.slice_axis(1, 0, 6);
        let sco = raw.slice_axis(1, 6, 6);
        let back = g.concat(&[&dir, &sco], 1);
        assert_eq!(back.value().to_vec(), raw.value().to_vec());
    }

    #[test]
    fn generation_is_deterministic() {
        let mut rng = Rng::new(205);
        let cfg = HyperNetCfg { ce: 4, k: 3, ch: 16, hidden_layers: 2, out_width: 3 };
        let net = HyperNet::init(cfg, &mut rng).unwrap();
        let a = net.filters_tensor(3, None, true).unwrap();
        let b = net.filters_tensor(3, None, true).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn filters_agree_at_coincident_cell_centers() {
        // Cell centers (2i+1)/r - 1 coincide between scales r and 3r at
        // j = 3i + 1. With the size head frozen those positions feed f
        // identical inputs, so the generated values agree exactly; this
        // is the mechanism behind filters varying continuously with r.
        let mut rng = Rng::new(206);
        let cfg = HyperNetCfg { ce: 2, k: 3, ch: 16, hidden_layers: 2, out_width: 3 };
        let mut net = HyperNet::init(cfg, &mut rng).unwrap();
        net.ws = Tensor::zeros(&[8]);
        net.bs = Tensor::zeros(&[8]);
        let r = 2;
        let big = 3 * r;
        let g = Graph::new();
        let vars = net.mount(&g, "h", false).unwrap();
        let raw_r = vars.raw_output(&g, r, None).unwrap().value();
        let raw_big = vars.raw_output(&g, big, None).unwrap().value();
        let (dx_r, dy_r) = coord_vectors(r);
        let (dx_b, dy_b) = coord_vectors(big);
        let taps = cfg.taps();
        let mut matched = 0;
        for s in 0..r * r {
            for s2 in 0..big * big {
                if (dx_r[s] - dx_b[s2]).abs() < 1e-15 && (dy_r[s] - dy_b[s2]).abs() < 1e-15 {
                    for p in 0..taps {
                        for c in 0..3 {
                            let a = raw_r.data()[(p * r * r + s) * 3 + c];
                            let b = raw_big.data()[(p * big * big + s2) * 3 + c];
                            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
                        }
                    }
                    matched += 1;
                }
            }
        }
        assert_eq!(matched, r * r, "every coarse center must reappear at 3r");
    }
}
