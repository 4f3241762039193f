//! The upsampler family: fixed-scale sub-pixel convolution baselines,
//! the hyper-network-driven multi-scale forms, the learned resampling
//! branch, and instantiation into deployable filter banks.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use igkit_core::autograd::{Graph, Var};
use igkit_core::container::{decode_named_tensors, encode_named_tensors, DType};
use igkit_core::sample::{bilinear_base_grid, grid_sample_bilinear};
use igkit_core::tensor::depth_to_space;
use igkit_core::{conv::conv2d, CoreError, Result, Tensor};

use crate::hypernet::{HyperNet, HyperNetVars};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    SpConv,
    SpConvPlus,
    IgConv,
    IgConvPlus,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::SpConv => "spconv",
            Variant::SpConvPlus => "spconv_plus",
            Variant::IgConv => "igconv",
            Variant::IgConvPlus => "igconv_plus",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(match tag {
            "spconv" => Variant::SpConv,
            "spconv_plus" => Variant::SpConvPlus,
            "igconv" => Variant::IgConv,
            "igconv_plus" => Variant::IgConvPlus,
            other => {
                return Err(CoreError::invalid("variant", format!("unknown variant {other:?}")))
            }
        })
    }
}

/// Classic sub-pixel convolution: conv to 3r^2 channels, then
/// depth-to-space. `kernel` is [3r^2, ce, k, k].
pub fn spconv_forward(m: &Var, kernel: &Var, r: usize) -> Var {
    let k = kernel.shape()[2];
    m.conv2d(kernel, (k - 1) / 2).depth_to_space(r)
}

/// Tensor-path twin of [`spconv_forward`] for instantiated kernels.
pub fn spconv_forward_tensor(m: &Tensor, kernel: &Tensor, r: usize) -> Result<Tensor> {
    let k = kernel.shape()[2];
    depth_to_space(&conv2d(m, kernel, (k - 1) / 2)?, r)
}

/// The heavier fixed-scale baseline: conv to c_mid*r^2, depth-to-space,
/// then a 3x3 conv to RGB in HR space.
pub fn spconv_plus_forward(m: &Var, k1: &Var, k2: &Var, r: usize) -> Var {
    m.conv2d(k1, 1).depth_to_space(r).conv2d(k2, 1)
}

pub fn spconv_plus_forward_tensor(m: &Tensor, k1: &Tensor, k2: &Tensor, r: usize) -> Result<Tensor> {
    conv2d(&depth_to_space(&conv2d(m, k1, 1)?, r)?, k2, 1)
}

/// Multi-scale reconstruction: generate the kernel for r, then run the
/// sub-pixel convolution with it.
pub fn igconv_forward(
    g: &Graph,
    m: &Var,
    hyper: &HyperNetVars,
    r: usize,
    size_input: Option<f64>,
    fgrep: bool,
) -> Result<Var> {
    if r < 1 {
        return Err(CoreError::invalid("igconv", "r must be >= 1"));
    }
    let kernel = hyper.filters(g, r, size_input, fgrep)?;
    Ok(spconv_forward(m, &kernel, r))
}

/// Input-dependent upsampling of the LR image itself: predicted
/// direction and scope calibrate offsets added to the bilinear base
/// grid, then the LR image is sampled per RGB channel.
pub fn igsample_forward(
    g: &Graph,
    lr: &Var,
    m: &Var,
    hyper_s: &HyperNetVars,
    r: usize,
    size_input: Option<f64>,
    fgrep: bool,
) -> Result<Var> {
    if r < 1 {
        return Err(CoreError::invalid("igsample", "r must be >= 1"));
    }
    let (ko, ks) = hyper_s.sampling_filters(g, r, size_input, fgrep)?;
    let pad = (hyper_s.cfg.k - 1) / 2;
    let direction = m.conv2d(&ko, pad);
    let scope = m.conv2d(&ks, pad).sigmoid().scale(0.5);
    let delta = direction.mul(&scope);
    let delta_hr = delta.depth_to_space(r);
    let shape = lr.shape();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let base = g.constant(bilinear_base_grid(n, c, h, w, r));
    let coords = base.add(&delta_hr);
    Ok(lr.grid_sample(&coords))
}

/// Full enhanced forward: reconstruction plus the resampled image.
#[allow(clippy::too_many_arguments)]
pub fn igconv_plus_forward(
    g: &Graph,
    lr: &Var,
    m: &Var,
    hyper: &HyperNetVars,
    hyper_s: &HyperNetVars,
    r: usize,
    size_input: Option<f64>,
    fgrep: bool,
) -> Result<Var> {
    let sr = igconv_forward(g, m, hyper, r, size_input, fgrep)?;
    let up = igsample_forward(g, lr, m, hyper_s, r, size_input, fgrep)?;
    Ok(sr.add(&up))
}

/// Per-scale materialized kernels: the deployment artifact.
#[derive(Clone, Debug)]
pub struct BankEntry {
    pub kernel: Tensor,
    pub sampling: Option<(Tensor, Tensor)>,
}

#[derive(Clone, Debug)]
pub struct FilterBank {
    pub variant: Variant,
    pub ce: usize,
    pub k: usize,
    pub entries: BTreeMap<usize, BankEntry>,
}

impl FilterBank {
    /// Precomputes kernels for every requested scale. The enhanced
    /// variant also materializes the sampling pair.
    pub fn instantiate(
        hyper: &HyperNet,
        hyper_s: Option<&HyperNet>,
        scales: &[usize],
        fgrep: bool,
    ) -> Result<FilterBank> {
        if scales.is_empty() {
            return Err(CoreError::invalid("instantiate", "empty scale set"));
        }
        let mut entries = BTreeMap::new();
        for &r in scales {
            if r < 1 {
                return Err(CoreError::invalid("instantiate", format!("scale {r} must be >= 1")));
            }
            let kernel = hyper.filters_tensor(r, None, fgrep)?;
            let sampling = match hyper_s {
                Some(hs) => Some(hs.sampling_filters_tensor(r, None, fgrep)?),
                None => None,
            };
            entries.insert(r, BankEntry { kernel, sampling });
        }
        Ok(FilterBank {
            variant: if hyper_s.is_some() { Variant::IgConvPlus } else { Variant::IgConv },
            ce: hyper.cfg.ce,
            k: hyper.cfg.k,
            entries,
        })
    }

    pub fn scales(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn entry(&self, r: usize) -> Result<&BankEntry> {
        self.entries
            .get(&r)
            .ok_or_else(|| CoreError::invalid("filter_bank", format!("scale {r} not instantiated")))
    }

    /// Upsamples with the stored kernels; identical arithmetic to the
    /// live hyper-network forward.
    pub fn upsample(&self, lr: &Tensor, m: &Tensor, r: usize) -> Result<Tensor> {
        let e = self.entry(r)?;
        let sr = spconv_forward_tensor(m, &e.kernel, r)?;
        match (&e.sampling, self.variant) {
            (Some((ko, ks)), Variant::IgConvPlus) => {
                let pad = (self.k - 1) / 2;
                let direction = conv2d(m, ko, pad)?;
                let scope = conv2d(m, ks, pad)?.sigmoid().scale(0.5);
                let delta_hr = depth_to_space(&direction.mul(&scope)?, r)?;
                let (n, c, h, w) = lr.dim4();
                let coords = bilinear_base_grid(n, c, h, w, r).add(&delta_hr)?;
                let up = grid_sample_bilinear(lr, &coords)?;
                sr.add(&up)
            }
            _ => Ok(sr),
        }
    }

    pub fn param_count(&self) -> usize {
        self.entries
            .values()
            .map(|e| {
                e.kernel.numel()
                    + e.sampling
                        .as_ref()
                        .map(|(a, b)| a.numel() + b.numel())
                        .unwrap_or(0)
            })
            .sum()
    }

    pub fn param_count_for(&self, r: usize) -> usize {
        self.entries
            .get(&r)
            .map(|e| {
                e.kernel.numel()
                    + e.sampling
                        .as_ref()
                        .map(|(a, b)| a.numel() + b.numel())
                        .unwrap_or(0)
            })
            .unwrap_or(0)
    }

    pub fn encode(&self, dtype: DType) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"IGFB");
        buf.extend_from_slice(&1u32.to_le_bytes());
        let tag = self.variant.tag().as_bytes();
        buf.push(tag.len() as u8);
        buf.extend_from_slice(tag);
        buf.extend_from_slice(&(self.ce as u32).to_le_bytes());
        buf.extend_from_slice(&(self.k as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &r in self.entries.keys() {
            buf.extend_from_slice(&(r as u32).to_le_bytes());
        }
        let mut tensors = BTreeMap::new();
        for (&r, e) in &self.entries {
            tensors.insert(format!("s{r}.kernel"), e.kernel.clone());
            if let Some((ko, ks)) = &e.sampling {
                tensors.insert(format!("s{r}.ko"), ko.clone());
                tensors.insert(format!("s{r}.ks"), ks.clone());
            }
        }
        encode_named_tensors(&mut buf, &tensors, dtype);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<FilterBank> {
        let fail = |s: String| CoreError::invalid("filter_bank", s);
        if bytes.len() < 9 || &bytes[..4] != b"IGFB" {
            return Err(fail("bad magic; not a filter bank".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != 1 {
            return Err(fail(format!("unsupported bank version {version}")));
        }
        let mut pos = 8usize;
        let tag_len = bytes[pos] as usize;
        pos += 1;
        let tag = std::str::from_utf8(&bytes[pos..pos + tag_len])
            .map_err(|e| fail(e.to_string()))?
            .to_string();
        pos += tag_len;
        let variant = Variant::from_tag(&tag)?;
        let rd_u32 = |pos: &mut usize| -> u32 {
            let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            v
        };
        let ce = rd_u32(&mut pos) as usize;
        let k = rd_u32(&mut pos) as usize;
        let count = rd_u32(&mut pos) as usize;
        let mut scales = Vec::with_capacity(count);
        for _ in 0..count {
            scales.push(rd_u32(&mut pos) as usize);
        }
        let tensors = decode_named_tensors(&bytes[pos..]).map_err(fail)?;
        let mut entries = BTreeMap::new();
        for r in scales {
            let kernel = tensors
                .get(&format!("s{r}.kernel"))
                .cloned()
                .ok_or_else(|| fail(format!("missing kernel for scale {r}")))?;
            let sampling = match (tensors.get(&format!("s{r}.ko")), tensors.get(&format!("s{r}.ks"))) {
                (Some(ko), Some(ks)) => Some((ko.clone(), ks.clone())),
                _ => None,
            };
            entries.insert(r, BankEntry { kernel, sampling });
        }
        Ok(FilterBank { variant, ce, k, entries })
    }

    pub fn save(&self, path: &Path, dtype: DType) -> Result<()> {
        let buf = self.encode(dtype);
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| CoreError::Io { path: path.display().to_string(), detail: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<FilterBank> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| CoreError::Io { path: path.display().to_string(), detail: e.to_string() })?;
        Self::decode(&bytes)
    }
}
