//! Upsampler-only latency measurements, matching the deployment
//! framing: kernels are pre-instantiated, the encoder is excluded, and
//! the default element type is f32. The harness asserts protocol
//! (warmups, trial counts), never absolute milliseconds.

use std::time::Instant;

use igkit_core::sample::{bilinear_base_grid, grid_sample_bilinear};
use igkit_core::scalar::Scalar;
use igkit_core::tensor::depth_to_space;
use igkit_core::{conv::conv2d, CoreError, Result, Rng, Tensor};

use crate::flops::{variant_flops, variant_params, variant_workspace_bytes, BenchVariant};

pub const MIN_WARMUP: usize = 5;
pub const MIN_TRIALS: usize = 30;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub variant: BenchVariant,
    pub ce: usize,
    pub scale: usize,
    pub c_mid: usize,
    /// Output image size the feature map is sized against.
    pub out_h: usize,
    pub out_w: usize,
    pub trials: usize,
    pub warmup: usize,
    /// f32 is the deployment width; f64 available for comparison.
    pub use_f64: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            variant: BenchVariant::SpConv,
            ce: 64,
            scale: 2,
            c_mid: 64,
            out_h: 720,
            out_w: 1280,
            trials: 50,
            warmup: 10,
            use_f64: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub variant: &'static str,
    pub scale: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
    pub warmup: usize,
    pub trials: usize,
    pub params: u64,
    pub flops: u64,
    pub workspace_bytes: u64,
}

impl BenchResult {
    pub fn csv_header() -> &'static str {
        "variant,scale,median_ms,p10_ms,p90_ms,warmup,trials,params,flops,workspace_bytes"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.4},{:.4},{:.4},{},{},{},{},{}",
            self.variant,
            self.scale,
            self.median_ms,
            self.p10_ms,
            self.p90_ms,
            self.warmup,
            self.trials,
            self.params,
            self.flops,
            self.workspace_bytes
        )
    }
}

fn random_tensor<S: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<S> {
    let mut data = vec![0.0f64; shape.iter().product()];
    rng.fill_normal(&mut data, 0.5);
    Tensor::<f64>::from_vec(shape, data).expect("bench tensor").cast::<S>()
}

fn run_variant<S: Scalar>(cfg: &BenchConfig) -> Result<Vec<f64>> {
    let r = cfg.scale;
    let lh = cfg.out_h.div_ceil(r);
    let lw = cfg.out_w.div_ceil(r);
    let mut rng = Rng::new(cfg.seed);
    let m: Tensor<S> = random_tensor(&[1, cfg.ce, lh, lw], &mut rng);
    let lr_img: Tensor<S> = random_tensor(&[1, 3, lh, lw], &mut rng);
    let kernel: Tensor<S> = random_tensor(&[3 * r * r, cfg.ce, 3, 3], &mut rng);
    let k1: Tensor<S> = random_tensor(&[cfg.c_mid * r * r, cfg.ce, 3, 3], &mut rng);
    let k2: Tensor<S> = random_tensor(&[3, cfg.c_mid, 3, 3], &mut rng);
    let ko: Tensor<S> = random_tensor(&[6 * r * r, cfg.ce, 3, 3], &mut rng);
    let ks: Tensor<S> = random_tensor(&[6 * r * r, cfg.ce, 3, 3], &mut rng);
    let base = bilinear_base_grid(1, 3, lh, lw, r).cast::<S>();

    let forward = |variant: BenchVariant| -> Result<Tensor<S>> {
        match variant {
            BenchVariant::SpConv | BenchVariant::IgConvInst => {
                depth_to_space(&conv2d(&m, &kernel, 1)?, r)
            }
            BenchVariant::SpConvPlus => {
                conv2d(&depth_to_space(&conv2d(&m, &k1, 1)?, r)?, &k2, 1)
            }
            BenchVariant::IgConvPlusInst => {
                let sr = depth_to_space(&conv2d(&m, &kernel, 1)?, r)?;
                let direction = conv2d(&m, &ko, 1)?;
                let scope = conv2d(&m, &ks, 1)?.sigmoid().scale(S::from_f64(0.5));
                let delta = depth_to_space(&direction.mul(&scope)?, r)?;
                let coords = base.add(&delta)?;
                let up = grid_sample_bilinear(&lr_img, &coords)?;
                sr.add(&up)
            }
        }
    };

    for _ in 0..cfg.warmup {
        std::hint::black_box(forward(cfg.variant)?);
    }
    let mut times = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let t0 = Instant::now();
        std::hint::black_box(forward(cfg.variant)?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    Ok(times)
}

pub fn bench(cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.warmup < MIN_WARMUP {
        return Err(CoreError::invalid(
            "bench",
            format!("warmup {} below the protocol minimum {MIN_WARMUP}", cfg.warmup),
        ));
    }
    if cfg.trials < MIN_TRIALS {
        return Err(CoreError::invalid(
            "bench",
            format!("trials {} below the protocol minimum {MIN_TRIALS}", cfg.trials),
        ));
    }
    if cfg.scale < 1 {
        return Err(CoreError::invalid("bench", "scale must be >= 1"));
    }
    let mut times = if cfg.use_f64 {
        run_variant::<f64>(cfg)?
    } else {
        run_variant::<f32>(cfg)?
    };
    times.sort_by(f64::total_cmp);
    let pick = |q: f64| times[((times.len() - 1) as f64 * q).round() as usize];
    let (ce, r, c_mid) = (cfg.ce as u64, cfg.scale as u64, cfg.c_mid as u64);
    let elem = if cfg.use_f64 { 8 } else { 4 };
    Ok(BenchResult {
        variant: cfg.variant.tag(),
        scale: cfg.scale,
        median_ms: pick(0.5),
        p10_ms: pick(0.1),
        p90_ms: pick(0.9),
        warmup: cfg.warmup,
        trials: cfg.trials,
        params: variant_params(cfg.variant, ce, r, c_mid, 3),
        flops: variant_flops(cfg.variant, ce, r, c_mid, 3, cfg.out_h as u64, cfg.out_w as u64),
        workspace_bytes: variant_workspace_bytes(
            cfg.variant,
            ce,
            r,
            c_mid,
            3,
            cfg.out_h as u64,
            cfg.out_w as u64,
            elem,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(variant: BenchVariant) -> BenchConfig {
        BenchConfig {
            variant,
            ce: 8,
            scale: 2,
            c_mid: 8,
            out_h: 64,
            out_w: 64,
            trials: 30,
            warmup: 5,
            use_f64: false,
            seed: 1,
        }
    }

    #[test]
    fn protocol_minimums_are_enforced() {
        let mut cfg = small_cfg(BenchVariant::SpConv);
        cfg.warmup = 2;
        assert!(bench(&cfg).is_err());
        let mut cfg = small_cfg(BenchVariant::SpConv);
        cfg.trials = 10;
        assert!(bench(&cfg).is_err());
    }

    #[test]
    fn all_variants_produce_results() {
        for v in [
            BenchVariant::SpConv,
            BenchVariant::SpConvPlus,
            BenchVariant::IgConvInst,
            BenchVariant::IgConvPlusInst,
        ] {
            let res = bench(&small_cfg(v)).unwrap();
            assert!(res.median_ms > 0.0, "{v:?}");
            assert!(res.p10_ms <= res.median_ms && res.median_ms <= res.p90_ms);
            assert!(res.params > 0 && res.flops > 0);
        }
    }

    #[test]
    fn f64_mode_also_runs() {
        let mut cfg = small_cfg(BenchVariant::IgConvPlusInst);
        cfg.use_f64 = true;
        assert!(bench(&cfg).unwrap().median_ms > 0.0);
    }
}
