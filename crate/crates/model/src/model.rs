//! The full SR model: encoder plus one configured upsampler, with
//! checkpoint serialization carrying enough metadata to reload without
//! a sidecar config.

use std::collections::BTreeMap;
use std::path::Path;

use igkit_core::autograd::{Graph, Var};
use igkit_core::container::{read_named_tensors, write_named_tensors, DType};
use igkit_core::{CoreError, Result, Rng, Tensor};
use igkit_image::bicubic_resize_to;

use crate::encoder::{EncoderCfg, TinyEncoder, TinyEncoderVars};
use crate::hypernet::{HyperNet, HyperNetCfg, HyperNetVars};
use crate::upsampler::{
    igconv_forward, igconv_plus_forward, spconv_forward, spconv_plus_forward, FilterBank, Variant,
};

#[derive(Clone, Debug, PartialEq)]
pub struct SrModelCfg {
    pub variant: Variant,
    pub encoder: EncoderCfg,
    pub k: usize,
    pub ch_h: usize,
    pub hidden_h: usize,
    pub ch_s: usize,
    pub hidden_s: usize,
    pub c_mid: usize,
    pub fgrep: bool,
    /// Scales the model is trained for. Fixed-scale variants take
    /// exactly one; the multi-scale variants use the set for training
    /// and instantiation defaults.
    pub scales: Vec<usize>,
}

impl SrModelCfg {
    pub fn multi_scale(variant: Variant, encoder: EncoderCfg, scales: Vec<usize>) -> Self {
        SrModelCfg {
            variant,
            encoder,
            k: 3,
            ch_h: 256,
            hidden_h: 4,
            ch_s: 128,
            hidden_s: 2,
            c_mid: 64,
            fgrep: variant == Variant::IgConvPlus,
            scales,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(CoreError::invalid("model", "scale set must be non-empty"));
        }
        if self.scales.iter().any(|&r| r < 1) {
            return Err(CoreError::invalid("model", "scales must be >= 1"));
        }
        match self.variant {
            Variant::SpConv | Variant::SpConvPlus => {
                if self.scales.len() != 1 {
                    return Err(CoreError::invalid(
                        "model",
                        format!(
                            "{} is scale-specific and takes exactly one scale, got {:?}",
                            self.variant.tag(),
                            self.scales
                        ),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn hyper_cfg(&self) -> HyperNetCfg {
        HyperNetCfg {
            ce: self.encoder.ce,
            k: self.k,
            ch: self.ch_h,
            hidden_layers: self.hidden_h,
            out_width: 3,
        }
    }

    pub fn hyper_s_cfg(&self) -> HyperNetCfg {
        HyperNetCfg {
            ce: self.encoder.ce,
            k: self.k,
            ch: self.ch_s,
            hidden_layers: self.hidden_s,
            out_width: 12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SrModel {
    pub cfg: SrModelCfg,
    pub encoder: TinyEncoder,
    pub hyper: Option<HyperNet>,
    pub hyper_s: Option<HyperNet>,
    /// Fixed kernels for the scale-specific baselines.
    pub sp_kernel: Option<Tensor>,
    pub sp_plus: Option<(Tensor, Tensor)>,
}

impl SrModel {
    pub fn init(cfg: SrModelCfg, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let encoder = TinyEncoder::init(cfg.encoder, rng);
        let (mut hyper, mut hyper_s, mut sp_kernel, mut sp_plus) = (None, None, None, None);
        let ce = cfg.encoder.ce;
        match cfg.variant {
            Variant::IgConv => {
                hyper = Some(HyperNet::init(cfg.hyper_cfg(), rng)?);
            }
            Variant::IgConvPlus => {
                hyper = Some(HyperNet::init(cfg.hyper_cfg(), rng)?);
                hyper_s = Some(HyperNet::init(cfg.hyper_s_cfg(), rng)?);
            }
            Variant::SpConv => {
                let r = cfg.scales[0];
                let std = (2.0 / (ce * 9) as f64).sqrt();
                let mut w = vec![0.0; 3 * r * r * ce * 9];
                rng.fill_normal(&mut w, std);
                sp_kernel = Some(Tensor::from_vec(&[3 * r * r, ce, 3, 3], w)?);
            }
            Variant::SpConvPlus => {
                let r = cfg.scales[0];
                let std1 = (2.0 / (ce * 9) as f64).sqrt();
                let mut w1 = vec![0.0; cfg.c_mid * r * r * ce * 9];
                rng.fill_normal(&mut w1, std1);
                let std2 = (2.0 / (cfg.c_mid * 9) as f64).sqrt();
                let mut w2 = vec![0.0; 3 * cfg.c_mid * 9];
                rng.fill_normal(&mut w2, std2);
                sp_plus = Some((
                    Tensor::from_vec(&[cfg.c_mid * r * r, ce, 3, 3], w1)?,
                    Tensor::from_vec(&[3, cfg.c_mid, 3, 3], w2)?,
                ));
            }
        }
        Ok(SrModel { cfg, encoder, hyper, hyper_s, sp_kernel, sp_plus })
    }

    pub fn state_dict(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        self.encoder.state_dict("encoder", &mut out);
        if let Some(h) = &self.hyper {
            h.state_dict("hyper", &mut out);
        }
        if let Some(hs) = &self.hyper_s {
            hs.state_dict("hyper_s", &mut out);
        }
        if let Some(k) = &self.sp_kernel {
            out.insert("spconv.kernel".to_string(), k.clone());
        }
        if let Some((k1, k2)) = &self.sp_plus {
            out.insert("spconv_plus.k1".to_string(), k1.clone());
            out.insert("spconv_plus.k2".to_string(), k2.clone());
        }
        out
    }

    /// Replaces parameter tensors by name (shapes must match).
    pub fn assign(&mut self, dict: &BTreeMap<String, Tensor>) -> Result<()> {
        let current = self.state_dict();
        for (name, t) in dict {
            if name.starts_with("meta.") {
                continue;
            }
            let Some(old) = current.get(name) else {
                return Err(CoreError::invalid("assign", format!("unknown parameter {name:?}")));
            };
            if old.shape() != t.shape() {
                return Err(CoreError::dims(
                    "assign",
                    format!("{name}: {:?} vs {:?}", old.shape(), t.shape()),
                ));
            }
        }
        let take = |dict: &BTreeMap<String, Tensor>, cur: &Tensor, name: String| -> Tensor {
            dict.get(&name).cloned().unwrap_or_else(|| cur.clone())
        };
        // Rebuild the typed structs from the merged dictionary.
        let mut merged = current.clone();
        for (name, t) in dict {
            if !name.starts_with("meta.") {
                merged.insert(name.clone(), t.clone());
            }
        }
        self.encoder = TinyEncoder::from_state(self.cfg.encoder, "encoder", &merged)?;
        if self.hyper.is_some() {
            self.hyper = Some(HyperNet::from_state(self.cfg.hyper_cfg(), "hyper", &merged)?);
        }
        if self.hyper_s.is_some() {
            self.hyper_s = Some(HyperNet::from_state(self.cfg.hyper_s_cfg(), "hyper_s", &merged)?);
        }
        if let Some(k) = &self.sp_kernel {
            self.sp_kernel = Some(take(&merged, k, "spconv.kernel".to_string()));
        }
        if let Some((k1, k2)) = self.sp_plus.clone() {
            self.sp_plus = Some((
                take(&merged, &k1, "spconv_plus.k1".to_string()),
                take(&merged, &k2, "spconv_plus.k2".to_string()),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.state_dict().values().map(|t| t.numel()).sum()
    }

    fn meta_dict(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        let s = |v: f64| Tensor::scalar(v);
        let variant_id = match self.cfg.variant {
            Variant::SpConv => 0.0,
            Variant::SpConvPlus => 1.0,
            Variant::IgConv => 2.0,
            Variant::IgConvPlus => 3.0,
        };
        out.insert("meta.variant".into(), s(variant_id));
        out.insert("meta.ce".into(), s(self.cfg.encoder.ce as f64));
        out.insert("meta.blocks".into(), s(self.cfg.encoder.blocks as f64));
        out.insert("meta.k".into(), s(self.cfg.k as f64));
        out.insert("meta.ch_h".into(), s(self.cfg.ch_h as f64));
        out.insert("meta.hidden_h".into(), s(self.cfg.hidden_h as f64));
        out.insert("meta.ch_s".into(), s(self.cfg.ch_s as f64));
        out.insert("meta.hidden_s".into(), s(self.cfg.hidden_s as f64));
        out.insert("meta.c_mid".into(), s(self.cfg.c_mid as f64));
        out.insert("meta.fgrep".into(), s(if self.cfg.fgrep { 1.0 } else { 0.0 }));
        let scales: Vec<f64> = self.cfg.scales.iter().map(|&r| r as f64).collect();
        out.insert(
            "meta.scales".into(),
            Tensor::from_vec(&[scales.len()], scales).expect("scales tensor"),
        );
        out
    }

    pub fn cfg_from_dict(dict: &BTreeMap<String, Tensor>) -> Result<SrModelCfg> {
        let get = |name: &str| -> Result<f64> {
            dict.get(name)
                .map(|t| t.data()[0])
                .ok_or_else(|| CoreError::invalid("checkpoint", format!("missing {name}")))
        };
        let variant = match get("meta.variant")? as u32 {
            0 => Variant::SpConv,
            1 => Variant::SpConvPlus,
            2 => Variant::IgConv,
            3 => Variant::IgConvPlus,
            v => return Err(CoreError::invalid("checkpoint", format!("bad variant id {v}"))),
        };
        let scales = dict
            .get("meta.scales")
            .ok_or_else(|| CoreError::invalid("checkpoint", "missing meta.scales"))?
            .data()
            .iter()
            .map(|&v| v as usize)
            .collect();
        Ok(SrModelCfg {
            variant,
            encoder: EncoderCfg { ce: get("meta.ce")? as usize, blocks: get("meta.blocks")? as usize },
            k: get("meta.k")? as usize,
            ch_h: get("meta.ch_h")? as usize,
            hidden_h: get("meta.hidden_h")? as usize,
            ch_s: get("meta.ch_s")? as usize,
            hidden_s: get("meta.hidden_s")? as usize,
            c_mid: get("meta.c_mid")? as usize,
            fgrep: get("meta.fgrep")? != 0.0,
            scales,
        })
    }

    pub fn from_dict(dict: &BTreeMap<String, Tensor>) -> Result<SrModel> {
        let cfg = Self::cfg_from_dict(dict)?;
        cfg.validate()?;
        let encoder = TinyEncoder::from_state(cfg.encoder, "encoder", dict)?;
        let hyper = match cfg.variant {
            Variant::IgConv | Variant::IgConvPlus => {
                Some(HyperNet::from_state(cfg.hyper_cfg(), "hyper", dict)?)
            }
            _ => None,
        };
        let hyper_s = match cfg.variant {
            Variant::IgConvPlus => Some(HyperNet::from_state(cfg.hyper_s_cfg(), "hyper_s", dict)?),
            _ => None,
        };
        let sp_kernel = match cfg.variant {
            Variant::SpConv => Some(
                dict.get("spconv.kernel")
                    .cloned()
                    .ok_or_else(|| CoreError::invalid("checkpoint", "missing spconv.kernel"))?,
            ),
            _ => None,
        };
        let sp_plus = match cfg.variant {
            Variant::SpConvPlus => {
                let k1 = dict
                    .get("spconv_plus.k1")
                    .cloned()
                    .ok_or_else(|| CoreError::invalid("checkpoint", "missing spconv_plus.k1"))?;
                let k2 = dict
                    .get("spconv_plus.k2")
                    .cloned()
                    .ok_or_else(|| CoreError::invalid("checkpoint", "missing spconv_plus.k2"))?;
                Some((k1, k2))
            }
            _ => None,
        };
        Ok(SrModel { cfg, encoder, hyper, hyper_s, sp_kernel, sp_plus })
    }

    /// Writes parameters plus `meta.*` and any extra named tensors
    /// (optimizer state, EMA shadows).
    pub fn save(&self, path: &Path, extra: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut dict = self.state_dict();
        dict.extend(self.meta_dict());
        for (k, v) in extra {
            dict.insert(k.clone(), v.clone());
        }
        write_named_tensors(path, &dict, DType::F64)
    }

    pub fn load(path: &Path) -> Result<(SrModel, BTreeMap<String, Tensor>)> {
        let dict = read_named_tensors(path)?;
        let model = Self::from_dict(&dict)?;
        Ok((model, dict))
    }

    pub fn mount(&self, g: &Graph, trainable: bool) -> Result<SrModelVars> {
        let leaf = |g: &Graph, name: &str, t: &Tensor| -> Result<Var> {
            if trainable {
                g.param(name, t.clone())
            } else {
                Ok(g.constant(t.clone()))
            }
        };
        Ok(SrModelVars {
            cfg: self.cfg.clone(),
            encoder: self.encoder.mount(g, "encoder", trainable)?,
            hyper: match &self.hyper {
                Some(h) => Some(h.mount(g, "hyper", trainable)?),
                None => None,
            },
            hyper_s: match &self.hyper_s {
                Some(h) => Some(h.mount(g, "hyper_s", trainable)?),
                None => None,
            },
            sp_kernel: match &self.sp_kernel {
                Some(k) => Some(leaf(g, "spconv.kernel", k)?),
                None => None,
            },
            sp_plus: match &self.sp_plus {
                Some((k1, k2)) => {
                    Some((leaf(g, "spconv_plus.k1", k1)?, leaf(g, "spconv_plus.k2", k2)?))
                }
                None => None,
            },
        })
    }

    /// Inference on a `[N, 3, H, W]` tensor in [0, 1].
    pub fn super_resolve(&self, lr: &Tensor, r: usize) -> Result<Tensor> {
        let g = Graph::new();
        let vars = self.mount(&g, false)?;
        let lr_var = g.constant(lr.clone());
        Ok(vars.forward(&g, &lr_var, r)?.value())
    }

    /// Encoder features only.
    pub fn encode(&self, lr: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let vars = self.mount(&g, false)?;
        let lr_var = g.constant(lr.clone());
        Ok(vars.encoder.forward(&lr_var).value())
    }

    /// Encoder features plus per-stage activations.
    pub fn encode_with_taps(&self, lr: &Tensor) -> Result<(Tensor, Vec<(String, Tensor)>)> {
        let g = Graph::new();
        let vars = self.mount(&g, false)?;
        let lr_var = g.constant(lr.clone());
        let (m, taps) = vars.encoder.forward_with_taps(&lr_var);
        Ok((
            m.value(),
            taps.into_iter().map(|(n, v)| (n, v.value())).collect(),
        ))
    }

    /// Materializes per-scale kernels for deployment.
    pub fn instantiate(&self, scales: &[usize]) -> Result<FilterBank> {
        match self.cfg.variant {
            Variant::IgConv => {
                FilterBank::instantiate(self.hyper.as_ref().unwrap(), None, scales, self.cfg.fgrep)
            }
            Variant::IgConvPlus => FilterBank::instantiate(
                self.hyper.as_ref().unwrap(),
                self.hyper_s.as_ref(),
                scales,
                self.cfg.fgrep,
            ),
            v => Err(CoreError::invalid(
                "instantiate",
                format!("{} has no hyper-network to instantiate", v.tag()),
            )),
        }
    }

    /// Non-integer scales: predict at the ceiling integer with the size
    /// head fed 2/r_float, then resample down to the requested size.
    pub fn super_resolve_arbitrary(&self, lr: &Tensor, r_float: f64) -> Result<Tensor> {
        if !(r_float > 1.0) {
            return Err(CoreError::invalid(
                "forward_arbitrary",
                format!("scale {r_float} must be > 1"),
            ));
        }
        let (_, _, h, w) = lr.dim4();
        let rc = r_float.ceil() as usize;
        if (r_float - rc as f64).abs() < 1e-12 || r_float.fract() == 0.0 {
            return self.super_resolve(lr, r_float as usize);
        }
        let g = Graph::new();
        let vars = self.mount(&g, false)?;
        let lr_var = g.constant(lr.clone());
        let sr = vars.forward_sized(&g, &lr_var, rc, Some(2.0 / r_float))?.value();
        let oh = (h as f64 * r_float).round() as usize;
        let ow = (w as f64 * r_float).round() as usize;
        bicubic_resize_to(&sr, oh, ow).map_err(|e| CoreError::invalid("forward_arbitrary", e.to_string()))
    }
}

pub struct SrModelVars {
    pub cfg: SrModelCfg,
    pub encoder: TinyEncoderVars,
    pub hyper: Option<HyperNetVars>,
    pub hyper_s: Option<HyperNetVars>,
    pub sp_kernel: Option<Var>,
    pub sp_plus: Option<(Var, Var)>,
}

impl SrModelVars {
    pub fn forward(&self, g: &Graph, lr: &Var, r: usize) -> Result<Var> {
        self.forward_sized(g, lr, r, None)
    }

    pub fn forward_sized(&self, g: &Graph, lr: &Var, r: usize, size_input: Option<f64>) -> Result<Var> {
        if r < 1 {
            return Err(CoreError::invalid("forward", "r must be >= 1"));
        }
        let m = self.encoder.forward(lr);
        match self.cfg.variant {
            Variant::SpConv => {
                self.require_scale(r)?;
                Ok(spconv_forward(&m, self.sp_kernel.as_ref().unwrap(), r))
            }
            Variant::SpConvPlus => {
                self.require_scale(r)?;
                let (k1, k2) = self.sp_plus.as_ref().unwrap();
                Ok(spconv_plus_forward(&m, k1, k2, r))
            }
            Variant::IgConv => igconv_forward(
                g,
                &m,
                self.hyper.as_ref().unwrap(),
                r,
                size_input,
                self.cfg.fgrep,
            ),
            Variant::IgConvPlus => igconv_plus_forward(
                g,
                lr,
                &m,
                self.hyper.as_ref().unwrap(),
                self.hyper_s.as_ref().unwrap(),
                r,
                size_input,
                self.cfg.fgrep,
            ),
        }
    }

    fn require_scale(&self, r: usize) -> Result<()> {
        if self.cfg.scales[0] != r {
            return Err(CoreError::invalid(
                "forward",
                format!("scale-specific model trained for x{}, asked for x{r}", self.cfg.scales[0]),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use igkit_image::bilinear_upsample;

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor {
        let mut data = vec![0.0; shape.iter().product()];
        rng.fill_uniform(&mut data, 0.0, 1.0);
        Tensor::from_vec(shape, data).unwrap()
    }

    fn tiny_cfg(variant: Variant) -> SrModelCfg {
        SrModelCfg {
            variant,
            encoder: EncoderCfg { ce: 6, blocks: 1 },
            k: 3,
            ch_h: 16,
            hidden_h: 1,
            ch_s: 8,
            hidden_s: 1,
            c_mid: 4,
            fgrep: variant == Variant::IgConvPlus,
            scales: match variant {
                Variant::SpConv | Variant::SpConvPlus => vec![2],
                _ => vec![2, 3, 4],
            },
        }
    }

    #[test]
    fn forward_shapes_per_variant() {
        let mut rng = Rng::new(500);
        let lr = random(&[1, 3, 6, 6], &mut rng);
        for variant in [Variant::SpConv, Variant::SpConvPlus, Variant::IgConv, Variant::IgConvPlus] {
            let model = SrModel::init(tiny_cfg(variant), &mut rng).unwrap();
            let out = model.super_resolve(&lr, 2).unwrap();
            assert_eq!(out.shape(), &[1, 3, 12, 12], "{variant:?}");
        }
    }

    #[test]
    fn fixed_variant_rejects_other_scales() {
        let mut rng = Rng::new(501);
        let model = SrModel::init(tiny_cfg(Variant::SpConv), &mut rng).unwrap();
        let lr = random(&[1, 3, 6, 6], &mut rng);
        assert!(model.super_resolve(&lr, 3).is_err());
    }

    #[test]
    fn fixed_variant_requires_single_scale() {
        let mut cfg = tiny_cfg(Variant::SpConv);
        cfg.scales = vec![2, 3];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_networks_collapse_to_bilinear() {
        let mut rng = Rng::new(502);
        let mut model = SrModel::init(tiny_cfg(Variant::IgConvPlus), &mut rng).unwrap();
        model.hyper = Some(HyperNet::zeroed(model.cfg.hyper_cfg()).unwrap());
        model.hyper_s = Some(HyperNet::zeroed(model.cfg.hyper_s_cfg()).unwrap());
        let lr = random(&[1, 3, 5, 5], &mut rng);
        for r in [2usize, 3] {
            let out = model.super_resolve(&lr, r).unwrap();
            let want = bilinear_upsample(&lr, r).unwrap();
            assert_eq!(out.to_vec(), want.to_vec(), "r = {r}");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let dir = std::env::temp_dir().join("igkit-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.ignt");
        let mut rng = Rng::new(503);
        let model = SrModel::init(tiny_cfg(Variant::IgConvPlus), &mut rng).unwrap();
        model.save(&path, &BTreeMap::new()).unwrap();
        let (back, _) = SrModel::load(&path).unwrap();
        assert_eq!(back.cfg, model.cfg);
        let lr = random(&[1, 3, 6, 6], &mut rng);
        let a = model.super_resolve(&lr, 3).unwrap();
        let b = back.super_resolve(&lr, 3).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn checkpoint_holds_one_parameter_set_regardless_of_scales() {
        let mut rng = Rng::new(504);
        let mut cfg = tiny_cfg(Variant::IgConvPlus);
        cfg.scales = vec![2];
        let single = SrModel::init(cfg.clone(), &mut rng).unwrap();
        cfg.scales = vec![2, 3, 4, 8];
        let multi = SrModel::init(cfg, &mut rng).unwrap();
        let keys_a: Vec<String> = single.state_dict().keys().cloned().collect();
        let keys_b: Vec<String> = multi.state_dict().keys().cloned().collect();
        assert_eq!(keys_a, keys_b);
        assert_eq!(single.param_count(), multi.param_count());
    }

    #[test]
    fn arbitrary_scale_routes_through_ceiling() {
        let mut rng = Rng::new(505);
        let model = SrModel::init(tiny_cfg(Variant::IgConvPlus), &mut rng).unwrap();
        let lr = random(&[1, 3, 10, 10], &mut rng);
        let out = model.super_resolve_arbitrary(&lr, 2.5).unwrap();
        assert_eq!(out.shape(), &[1, 3, 25, 25]);
        // Integer float scale short-circuits to the plain path.
        let a = model.super_resolve_arbitrary(&lr, 2.0).unwrap();
        let b = model.super_resolve(&lr, 2).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
        assert!(model.super_resolve_arbitrary(&lr, 1.0).is_err());
        assert!(model.super_resolve_arbitrary(&lr, 0.5).is_err());
    }

    #[test]
    fn assign_rejects_unknown_or_mismatched() {
        let mut rng = Rng::new(506);
        let mut model = SrModel::init(tiny_cfg(Variant::IgConv), &mut rng).unwrap();
        let mut bad = BTreeMap::new();
        bad.insert("nonsense".to_string(), Tensor::scalar(1.0));
        assert!(model.assign(&bad).is_err());
        let mut mism = BTreeMap::new();
        mism.insert("hyper.zamp".to_string(), Tensor::zeros(&[3]));
        assert!(model.assign(&mism).is_err());
    }
}
