// Rough throughput numbers for the kernels that dominate training.
// Run with --release; not a correctness test.

use igkit_core::autograd::{backward, Graph};
use igkit_core::gemm::{matmul_nn, matmul_nt, matmul_tn};
use igkit_core::rng::Rng;
use igkit_core::Tensor;
use std::time::Instant;

fn bench(name: &str, m: usize, k: usize, n: usize, which: u8) {
    let mut rng = Rng::new(1);
    let (asz, bsz) = match which {
        0 => (m * k, k * n),
        1 => (m * k, n * k),
        _ => (k * m, k * n),
    };
    let mut a = vec![0.0f64; asz];
    let mut b = vec![0.0f64; bsz];
    rng.fill_normal(&mut a, 1.0);
    rng.fill_normal(&mut b, 1.0);
    let mut c = vec![0.0f64; m * n];
    let flops = 2.0 * m as f64 * k as f64 * n as f64;
    for _ in 0..3 {
        match which {
            0 => matmul_nn(&mut c, &a, &b, m, k, n),
            1 => matmul_nt(&mut c, &a, &b, m, k, n),
            _ => matmul_tn(&mut c, &a, &b, m, k, n),
        }
    }
    let reps = (2e9 / flops).ceil().max(3.0) as usize;
    let t0 = Instant::now();
    for _ in 0..reps {
        match which {
            0 => matmul_nn(&mut c, &a, &b, m, k, n),
            1 => matmul_nt(&mut c, &a, &b, m, k, n),
            _ => matmul_tn(&mut c, &a, &b, m, k, n),
        }
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!(
        "{name} m={m} k={k} n={n}: {:.2} Gflop/s ({:.3} ms)",
        flops / dt / 1e9,
        dt * 1e3
    );
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut data = vec![0.0; shape.iter().product()];
    rng.fill_normal(&mut data, 0.1);
    Tensor::from_vec(shape, data).unwrap()
}

/// Mimics one hyper-network filter generation plus backward at scale r.
fn hypernet_like_step(r: usize, ce: usize, ch: usize, hidden: usize) -> f64 {
    let mut rng = Rng::new(2);
    let p = ce * 9;
    let s = r * r;
    let g = Graph::new();
    let zx = g.param("zx", random(&[p, ch / 2], &mut rng)).unwrap();
    let zy = g.param("zy", random(&[p, ch / 2], &mut rng)).unwrap();
    let amp = g.param("amp", random(&[ch], &mut rng)).unwrap();
    let dx: Vec<f64> = (0..s).map(|i| (i % r) as f64 / r as f64).collect();
    let dy: Vec<f64> = (0..s).map(|i| (i / r) as f64 / r as f64).collect();
    let t0 = Instant::now();
    let feats = g.coord_features(&zx, &zy, dx, dy);
    let cosb = feats.scale(std::f64::consts::PI).cos();
    let sinb = feats.scale(std::f64::consts::PI).sin();
    let four = g.concat(&[&cosb, &sinb], 2).mul_last(&amp).reshape(&[p * s, ch]);
    let mut h = four;
    for l in 0..hidden {
        let w = g.param(&format!("w{l}"), random(&[ch, ch], &mut rng)).unwrap();
        let b = g.param(&format!("b{l}"), random(&[ch], &mut rng)).unwrap();
        h = h.linear(&w, Some(&b)).relu();
    }
    let wo = g.param("wo", random(&[ch, 3], &mut rng)).unwrap();
    let out = h.linear(&wo, None);
    let loss = out.abs().mean();
    let _grads = backward(&loss).unwrap();
    t0.elapsed().as_secs_f64()
}

/// Mimics one encoder forward+backward on a patch.
fn encoder_like_step(ce: usize, blocks: usize, hw: usize) -> f64 {
    let mut rng = Rng::new(3);
    let g = Graph::new();
    let img = g.constant(random(&[1, 3, hw, hw], &mut rng));
    let t0 = Instant::now();
    let wh = g.param("head", random(&[ce, 3, 3, 3], &mut rng)).unwrap();
    let mut x = img.conv2d(&wh, 1);
    for bi in 0..blocks {
        let w1 = g.param(&format!("b{bi}a"), random(&[ce, ce, 3, 3], &mut rng)).unwrap();
        let w2 = g.param(&format!("b{bi}b"), random(&[ce, ce, 3, 3], &mut rng)).unwrap();
        let y = x.conv2d(&w1, 1).relu().conv2d(&w2, 1);
        x = x.add(&y);
    }
    let wt = g.param("tail", random(&[ce, ce, 3, 3], &mut rng)).unwrap();
    let out = x.conv2d(&wt, 1);
    let loss = out.abs().mean();
    let _grads = backward(&loss).unwrap();
    t0.elapsed().as_secs_f64()
}

fn main() {
    bench("nn", 1152, 256, 256, 0);
    bench("nn", 4608, 256, 256, 0);
    bench("nn", 2592, 128, 128, 0);
    bench("nn", 32, 288, 2304, 0);
    bench("nn", 32, 288, 12544, 0);
    bench("nn", 96, 96, 96, 0);
    bench("nn", 192, 192, 192, 0);
    bench("nt", 4608, 256, 256, 1);
    bench("tn", 256, 4608, 256, 2);
    bench("nt", 32, 2304, 288, 1);

    for r in [2usize, 3, 4] {
        let mut best = f64::MAX;
        for _ in 0..3 {
            best = best.min(hypernet_like_step(r, 32, 256, 4));
        }
        println!("hypernet fwd+bwd r={r}: {:.1} ms", best * 1e3);
    }
    let mut best = f64::MAX;
    for _ in 0..3 {
        best = best.min(encoder_like_step(32, 4, 48));
    }
    println!("encoder fwd+bwd 48x48: {:.1} ms", best * 1e3);
}
