//! End-to-end properties of the assembled model: gradients reach every
//! latent, the full forward matches finite differences, and outputs
//! are translation-covariant modulo the upsampling grid.

use std::collections::BTreeMap;

use igkit_core::autograd::{backward, Graph};
use igkit_core::{Rng, Tensor};
use igkit_model::model::{SrModel, SrModelCfg};
use igkit_model::{total_loss, EncoderCfg, LossConfig, Variant};

fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
    let mut data = vec![0.0; shape.iter().product()];
    rng.fill_uniform(&mut data, 0.0, 1.0);
    Tensor::from_vec(shape, data).unwrap()
}

fn tiny_cfg() -> SrModelCfg {
    SrModelCfg {
        variant: Variant::IgConvPlus,
        encoder: EncoderCfg { ce: 4, blocks: 1 },
        k: 3,
        ch_h: 8,
        hidden_h: 1,
        ch_s: 8,
        hidden_s: 1,
        c_mid: 4,
        fgrep: true,
        scales: vec![2, 3],
    }
}

fn loss_for(model: &SrModel, lr: &Tensor, hr: &Tensor, r: usize) -> f64 {
    let g = Graph::new();
    let vars = model.mount(&g, false).unwrap();
    let lrv = g.constant(lr.clone());
    let hrv = g.constant(hr.clone());
    let sr = vars.forward(&g, &lrv, r).unwrap();
    total_loss(&sr, &hrv, &LossConfig::default()).unwrap().total.value().data()[0]
}

#[test]
fn gradients_reach_every_parameter_group() {
    let mut rng = Rng::new(1100);
    let model = SrModel::init(tiny_cfg(), &mut rng).unwrap();
    let lr = random(&[1, 3, 4, 4], &mut rng);
    let hr = random(&[1, 3, 8, 8], &mut rng);
    let g = Graph::new();
    let vars = model.mount(&g, true).unwrap();
    let lrv = g.constant(lr);
    let hrv = g.constant(hr);
    let sr = vars.forward(&g, &lrv, 2).unwrap();
    let parts = total_loss(&sr, &hrv, &LossConfig::default()).unwrap();
    let grads = backward(&parts.total).unwrap();
    // Every latent family of both hyper-networks and the encoder must
    // receive signal.
    for key in [
        "hyper.zx",
        "hyper.zy",
        "hyper.zamp",
        "hyper.size.w",
        "hyper.f0.w",
        "hyper.out.w",
        "hyper_s.zx",
        "hyper_s.zamp",
        "hyper_s.out.w",
        "encoder.head.w",
        "encoder.tail.w",
    ] {
        let gt = grads.get(key).unwrap_or_else(|| panic!("missing gradient {key}"));
        let norm: f64 = gt.data().iter().map(|v| v * v).sum();
        assert!(norm > 0.0, "{key} got a zero gradient");
    }
}

#[test]
fn composite_forward_matches_finite_differences() {
    // Spot-check d(loss)/d(theta) for parameters drawn from each
    // module of the full enhanced pipeline on a 4x4 input.
    let mut rng = Rng::new(1101);
    let model = SrModel::init(tiny_cfg(), &mut rng).unwrap();
    let lr = random(&[1, 3, 4, 4], &mut rng);
    let hr = random(&[1, 3, 8, 8], &mut rng);
    let g = Graph::new();
    let vars = model.mount(&g, true).unwrap();
    let lrv = g.constant(lr.clone());
    let hrv = g.constant(hr.clone());
    let sr = vars.forward(&g, &lrv, 2).unwrap();
    let parts = total_loss(&sr, &hrv, &LossConfig::default()).unwrap();
    let grads = backward(&parts.total).unwrap();
    let eps = 1e-5;
    for key in ["hyper.zx", "hyper.size.w", "hyper_s.out.w", "encoder.block0.conv0.w"] {
        let dict = model.state_dict();
        let base = &dict[key];
        for probe in [0usize, base.numel() / 2] {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let mut pd = dict.clone();
            let mut vals = base.to_vec();
            vals[probe] += eps;
            pd.insert(key.to_string(), Tensor::from_vec(base.shape(), vals.clone()).unwrap());
            plus.assign(&pd).unwrap();
            vals[probe] -= 2.0 * eps;
            pd.insert(key.to_string(), Tensor::from_vec(base.shape(), vals).unwrap());
            minus.assign(&pd).unwrap();
            let fd = (loss_for(&plus, &lr, &hr, 2) - loss_for(&minus, &lr, &hr, 2)) / (2.0 * eps);
            let an = grads[key].data()[probe];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            assert!(rel < 1e-4, "{key}[{probe}]: analytic {an} vs fd {fd} (rel {rel:.2e})");
        }
    }
}

#[test]
fn outputs_shift_by_r_when_the_input_shifts_by_one() {
    let mut rng = Rng::new(1102);
    let model = SrModel::init(tiny_cfg(), &mut rng).unwrap();
    let (h, w) = (24usize, 24usize);
    let lr = random(&[1, 3, h, w], &mut rng);
    // Shift down-right by one LR pixel (content moves +1).
    let mut shifted = vec![0.0; lr.numel()];
    for c in 0..3 {
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                shifted[(c * h + y + 1) * w + x + 1] = lr.data()[(c * h + y) * w + x];
            }
        }
    }
    let lr_shift = Tensor::from_vec(lr.shape(), shifted).unwrap();
    for r in [2usize, 3] {
        let a = model.super_resolve(&lr, r).unwrap();
        let b = model.super_resolve(&lr_shift, r).unwrap();
        // Compare the interior, clear of every padded receptive field:
        // four encoder convs plus the upsampler conv and bilinear taps
        // reach about six LR pixels from the border.
        let m = 7 * r;
        let (hh, ww) = (h * r, w * r);
        let mut worst: f64 = 0.0;
        for c in 0..3 {
            for y in m..hh - m - r {
                for x in m..ww - m - r {
                    let d = (b.at4(0, c, y + r, x + r) - a.at4(0, c, y, x)).abs();
                    worst = worst.max(d);
                }
            }
        }
        assert!(worst < 1e-10, "r = {r}: worst interior deviation {worst}");
    }
}

#[test]
fn multi_scale_outputs_are_reproducible_after_save_load() {
    let dir = std::env::temp_dir().join("igkit-composite-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("m.ignt");
    let mut rng = Rng::new(1103);
    let model = SrModel::init(tiny_cfg(), &mut rng).unwrap();
    model.save(&path, &BTreeMap::new()).unwrap();
    let (back, _) = SrModel::load(&path).unwrap();
    let lr = random(&[1, 3, 6, 6], &mut rng);
    for r in [2usize, 3] {
        let a = model.super_resolve(&lr, r).unwrap();
        let b = back.super_resolve(&lr, r).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    std::fs::remove_file(&path).ok();
}
