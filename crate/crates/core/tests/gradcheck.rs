//! Central finite-difference validation for every differentiable op:
//! five random direction projections per op, f64, step 1e-5. Smooth
//! ops must agree to 1e-6 relative; kinked ops (relu, abs, bilinear at
//! cell boundaries) get 1e-4 and inputs sampled away from their kinks.

use igkit_core::autograd::{backward, Graph, Var};
use igkit_core::sample::bilinear_base_grid;
use igkit_core::{Rng, Tensor};
use std::collections::BTreeMap;

const STEP: f64 = 1e-5;
const SMOOTH_TOL: f64 = 1e-6;
const KINKED_TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut data = vec![0.0; shape.iter().product()];
    rng.fill_normal(&mut data, 0.8);
    Tensor::from_vec(shape, data).unwrap()
}

/// Checks d(loss)/d(params) against central differences along five
/// random directions.
fn gradcheck(
    name: &str,
    params: &[(&str, Tensor)],
    build: impl Fn(&Graph, &BTreeMap<String, Var>) -> Var,
    tol: f64,
    rng: &mut Rng,
) {
    let eval = |values: &BTreeMap<String, Tensor>| -> f64 {
        let g = Graph::new();
        let mut vars = BTreeMap::new();
        for (n, t) in values {
            vars.insert(n.clone(), g.constant(t.clone()));
        }
        build(&g, &vars).value().data()[0]
    };
    // Analytic gradients.
    let g = Graph::new();
    let mut vars = BTreeMap::new();
    let mut base = BTreeMap::new();
    for (n, t) in params {
        vars.insert(n.to_string(), g.param(n, t.clone()).unwrap());
        base.insert(n.to_string(), t.clone());
    }
    let loss = build(&g, &vars);
    assert_eq!(loss.value().numel(), 1, "{name}: loss must be scalar");
    let grads = backward(&loss).unwrap();
    for trial in 0..5 {
        // Random unit direction over the concatenated parameters.
        let mut dirs = BTreeMap::new();
        let mut norm = 0.0;
        for (n, t) in params {
            let mut d = vec![0.0; t.numel()];
            rng.fill_normal(&mut d, 1.0);
            norm += d.iter().map(|v| v * v).sum::<f64>();
            dirs.insert(n.to_string(), d);
        }
        let norm = norm.sqrt();
        for d in dirs.values_mut() {
            for v in d.iter_mut() {
                *v /= norm;
            }
        }
        let perturb = |sign: f64| -> BTreeMap<String, Tensor> {
            base.iter()
                .map(|(n, t)| {
                    let d = &dirs[n];
                    let data: Vec<f64> = t
                        .data()
                        .iter()
                        .zip(d)
                        .map(|(v, dv)| v + sign * STEP * dv)
                        .collect();
                    (n.clone(), Tensor::from_vec(t.shape(), data).unwrap())
                })
                .collect()
        };
        let fd = (eval(&perturb(1.0)) - eval(&perturb(-1.0))) / (2.0 * STEP);
        let analytic: f64 = grads
            .iter()
            .map(|(n, gt)| {
                gt.data()
                    .iter()
                    .zip(&dirs[n])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        let denom = fd.abs().max(analytic.abs()).max(1e-6);
        let rel = (fd - analytic).abs() / denom;
        assert!(
            rel < tol,
            "{name} trial {trial}: analytic {analytic} vs fd {fd} (rel {rel:.3e})"
        );
    }
}

#[test]
fn elementwise_and_reduction_ops() {
    let mut rng = Rng::new(900);
    let a = random(&[2, 3, 4, 4], &mut rng);
    let b = random(&[2, 3, 4, 4], &mut rng);
    let w = random(&[2, 3, 4, 4], &mut rng);
    gradcheck(
        "add/sub/mul/scale",
        &[("a", a.clone()), ("b", b.clone())],
        |g, vars| {
            let wv = g.constant(w.clone());
            vars["a"]
                .add(&vars["b"])
                .sub(&vars["a"].mul(&vars["b"]))
                .scale(1.7)
                .add_scalar(0.3)
                .mul(&wv)
                .sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    gradcheck(
        "sigmoid/sin/cos/mean",
        &[("a", a.clone())],
        |g, vars| {
            let wv = g.constant(w.clone());
            let x = &vars["a"];
            x.sigmoid().add(&x.sin()).add(&x.cos()).mul(&wv).mean()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    // Keep relu/abs inputs away from the kink.
    let shifted = a.map(|v| if v.abs() < 0.05 { v + 0.2 } else { v });
    gradcheck(
        "relu/abs",
        &[("a", shifted)],
        |g, vars| {
            let wv = g.constant(w.clone());
            vars["a"].relu().add(&vars["a"].abs()).mul(&wv).sum()
        },
        KINKED_TOL,
        &mut rng,
    );
}

#[test]
fn linear_and_bias_ops() {
    let mut rng = Rng::new(901);
    let x = random(&[7, 5], &mut rng);
    let w = random(&[5, 4], &mut rng);
    let b = random(&[4], &mut rng);
    let wsum = random(&[7, 4], &mut rng);
    gradcheck(
        "linear",
        &[("x", x), ("w", w), ("b", b)],
        |g, vars| {
            let ws = g.constant(wsum.clone());
            vars["x"].linear(&vars["w"], Some(&vars["b"])).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    let img = random(&[2, 3, 4, 5], &mut rng);
    let cb = random(&[3], &mut rng);
    let wimg = random(&[2, 3, 4, 5], &mut rng);
    gradcheck(
        "add_channel_bias",
        &[("x", img), ("b", cb)],
        |g, vars| {
            let ws = g.constant(wimg.clone());
            vars["x"].add_channel_bias(&vars["b"]).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    let feats = random(&[4, 6, 8], &mut rng);
    let last = random(&[8], &mut rng);
    let wf = random(&[4, 6, 8], &mut rng);
    gradcheck(
        "add_last/mul_last",
        &[("x", feats), ("b", last.clone()), ("m", last)],
        |g, vars| {
            let ws = g.constant(wf.clone());
            vars["x"].add_last(&vars["b"]).mul_last(&vars["m"]).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn coord_features_and_fourier_pair() {
    let mut rng = Rng::new(902);
    let zx = random(&[6, 4], &mut rng);
    let zy = random(&[6, 4], &mut rng);
    let wf = random(&[6, 9, 8], &mut rng);
    let dx: Vec<f64> = (0..9).map(|i| (i % 3) as f64 / 3.0 - 0.3).collect();
    let dy: Vec<f64> = (0..9).map(|i| (i / 3) as f64 / 3.0 - 0.3).collect();
    gradcheck(
        "coord_features+fourier_pair",
        &[("zx", zx), ("zy", zy)],
        |g, vars| {
            let ws = g.constant(wf.clone());
            g.coord_features(&vars["zx"], &vars["zy"], dx.clone(), dy.clone())
                .scale(std::f64::consts::PI)
                .fourier_pair()
                .mul(&ws)
                .sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn conv_and_shuffle_ops() {
    let mut rng = Rng::new(903);
    let x = random(&[2, 3, 5, 5], &mut rng);
    let k = random(&[4, 3, 3, 3], &mut rng);
    let w = random(&[2, 4, 5, 5], &mut rng);
    gradcheck(
        "conv2d",
        &[("x", x), ("k", k)],
        |g, vars| {
            let ws = g.constant(w.clone());
            vars["x"].conv2d(&vars["k"], 1).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    let packed = random(&[1, 12, 3, 3], &mut rng);
    let wds = random(&[1, 3, 6, 6], &mut rng);
    gradcheck(
        "depth_to_space",
        &[("x", packed)],
        |g, vars| {
            let ws = g.constant(wds.clone());
            vars["x"].depth_to_space(2).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
    let wide = random(&[1, 2, 6, 6], &mut rng);
    let wsd = random(&[1, 8, 3, 3], &mut rng);
    gradcheck(
        "space_to_depth",
        &[("x", wide)],
        |g, vars| {
            let ws = g.constant(wsd.clone());
            vars["x"].space_to_depth(2).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn shape_ops() {
    let mut rng = Rng::new(904);
    let x = random(&[2, 3, 4, 5], &mut rng);
    let w = random(&[5, 4, 3, 2], &mut rng);
    gradcheck(
        "reshape/permute/slice/concat",
        &[("x", x)],
        |g, vars| {
            let ws = g.constant(w.clone());
            let p = vars["x"].permute(&[3, 2, 1, 0]);
            let s1 = p.slice_axis(1, 0, 2);
            let s2 = p.slice_axis(1, 2, 2);
            g.concat(&[&s1, &s2], 1).reshape(&[5, 4, 3, 2]).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn symmetrize_is_differentiable_and_self_adjoint() {
    let mut rng = Rng::new(905);
    let k = random(&[4, 2, 3, 3], &mut rng);
    let w = random(&[4, 2, 3, 3], &mut rng);
    gradcheck(
        "symmetrize",
        &[("k", k)],
        |g, vars| {
            let ws = g.constant(w.clone());
            vars["k"].symmetrize().mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn dft_loss_gradient() {
    let mut rng = Rng::new(906);
    let x = random(&[1, 2, 4, 4], &mut rng);
    let y = random(&[1, 2, 4, 4], &mut rng);
    gradcheck(
        "l1 of dft difference",
        &[("x", x)],
        |g, vars| {
            let yv = g.constant(y.clone());
            vars["x"]
                .dft2_stacked()
                .sub(&yv.dft2_stacked())
                .abs()
                .mean()
        },
        1e-5,
        &mut rng,
    );
}

#[test]
fn grid_sample_gradients_reach_image_and_coordinates() {
    let mut rng = Rng::new(907);
    let img = random(&[1, 2, 5, 5], &mut rng);
    // Coordinates at least 1e-3 away from interpolation cell
    // boundaries and strictly inside the image.
    let base = bilinear_base_grid(1, 2, 5, 5, 1);
    let coords = base.map(|v| (v + 0.37).clamp(0.4, 3.6));
    let w = random(&[1, 2, 5, 5], &mut rng);
    gradcheck(
        "grid_sample (image + coords)",
        &[("img", img), ("coords", coords)],
        |g, vars| {
            let ws = g.constant(w.clone());
            vars["img"].grid_sample(&vars["coords"]).mul(&ws).sum()
        },
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn conv_loss_matches_spec_example() {
    // loss = sum(conv2d(x, K)): the named example of the contract.
    let mut rng = Rng::new(908);
    let x = random(&[1, 2, 4, 4], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    gradcheck(
        "sum(conv2d(x, K))",
        &[("x", x), ("k", k)],
        |_, vars| vars["x"].conv2d(&vars["k"], 1).sum(),
        SMOOTH_TOL,
        &mut rng,
    );
}

#[test]
fn backward_is_bit_deterministic_across_runs() {
    let run = || {
        let mut rng = Rng::new(909);
        let g = Graph::new();
        let x = g.param("x", random(&[1, 3, 6, 6], &mut rng)).unwrap();
        let k = g.param("k", random(&[12, 3, 3, 3], &mut rng)).unwrap();
        let loss = x
            .conv2d(&k, 1)
            .depth_to_space(2)
            .dft2_stacked()
            .abs()
            .mean();
        let grads = backward(&loss).unwrap();
        grads
            .into_iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
