//! Closed-form operation and parameter counters for the upsampler
//! variants. Flops count multiply and add separately (2 per MAC);
//! depth-to-space is a pure data movement and counts zero.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchVariant {
    SpConv,
    SpConvPlus,
    IgConvInst,
    IgConvPlusInst,
}

impl BenchVariant {
    pub fn tag(self) -> &'static str {
        match self {
            BenchVariant::SpConv => "spconv",
            BenchVariant::SpConvPlus => "spconv_plus",
            BenchVariant::IgConvInst => "igconv_inst",
            BenchVariant::IgConvPlusInst => "igconv_plus_inst",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "spconv" => BenchVariant::SpConv,
            "spconv_plus" => BenchVariant::SpConvPlus,
            "igconv_inst" => BenchVariant::IgConvInst,
            "igconv_plus_inst" => BenchVariant::IgConvPlusInst,
            _ => return None,
        })
    }
}

pub fn conv2d_flops(c_in: u64, c_out: u64, k: u64, h: u64, w: u64) -> u64 {
    2 * c_in * c_out * k * k * h * w
}

/// Parameters of each upsampler at one scale; the generated-kernel
/// paths carry no biases, matching the stored kernel shapes.
pub fn variant_params(variant: BenchVariant, ce: u64, r: u64, c_mid: u64, k: u64) -> u64 {
    match variant {
        // Instantiated kernels are exactly the fixed-scale kernel set.
        BenchVariant::SpConv | BenchVariant::IgConvInst => 3 * r * r * ce * k * k,
        BenchVariant::SpConvPlus => c_mid * r * r * ce * k * k + 3 * c_mid * k * k,
        BenchVariant::IgConvPlusInst => {
            3 * r * r * ce * k * k + 2 * 6 * r * r * ce * k * k
        }
    }
}

/// Upsampler-only flops to produce an (out_h x out_w) RGB image from a
/// (out_h/r x out_w/r) feature map.
pub fn variant_flops(
    variant: BenchVariant,
    ce: u64,
    r: u64,
    c_mid: u64,
    k: u64,
    out_h: u64,
    out_w: u64,
) -> u64 {
    let lh = out_h.div_ceil(r);
    let lw = out_w.div_ceil(r);
    let hr_px = out_h * out_w;
    match variant {
        BenchVariant::SpConv | BenchVariant::IgConvInst => {
            conv2d_flops(ce, 3 * r * r, k, lh, lw)
        }
        BenchVariant::SpConvPlus => {
            conv2d_flops(ce, c_mid * r * r, k, lh, lw) + conv2d_flops(c_mid, 3, k, out_h, out_w)
        }
        BenchVariant::IgConvPlusInst => {
            let recon = conv2d_flops(ce, 3 * r * r, k, lh, lw);
            let sampling = 2 * conv2d_flops(ce, 6 * r * r, k, lh, lw);
            // sigmoid (~4 flops) + halving + offset product in LR space,
            // then per-HR-pixel grid add, bilinear gather (~16), and the
            // final residual add over 3 channels.
            let lr_elem = 6 * r * r * lh * lw;
            let pointwise = 6 * lr_elem;
            let hr_elem = 6 * hr_px;
            let sampler = hr_elem + 16 * 3 * hr_px + 3 * hr_px;
            recon + sampling + pointwise + sampler
        }
    }
}

/// Analytic peak transient footprint (bytes) of one forward pass at
/// the given element width: the conv patch buffer plus the largest
/// simultaneously-live intermediates.
pub fn variant_workspace_bytes(
    variant: BenchVariant,
    ce: u64,
    r: u64,
    c_mid: u64,
    k: u64,
    out_h: u64,
    out_w: u64,
    elem_bytes: u64,
) -> u64 {
    let lh = out_h.div_ceil(r);
    let lw = out_w.div_ceil(r);
    // The conv gathers patches in row blocks capped at 2^21 elements.
    let im2col_chunk = |c_in: u64, w: u64, h: u64| {
        let per_row = c_in * k * k * w;
        (per_row * h).min(per_row.max(1 << 21)) * elem_bytes
    };
    match variant {
        BenchVariant::SpConv | BenchVariant::IgConvInst => {
            let conv_out = 3 * r * r * lh * lw;
            im2col_chunk(ce, lw, lh) + (conv_out + 3 * out_h * out_w) * elem_bytes
        }
        BenchVariant::SpConvPlus => {
            let mid_lr = c_mid * r * r * lh * lw;
            let mid_hr = c_mid * out_h * out_w;
            im2col_chunk(c_mid, out_w, out_h) + (mid_lr + mid_hr + 3 * out_h * out_w) * elem_bytes
        }
        BenchVariant::IgConvPlusInst => {
            let recon = 3 * r * r * lh * lw;
            let offsets = 2 * 6 * r * r * lh * lw;
            let coords = 2 * 3 * out_h * out_w;
            let hr = 2 * 3 * out_h * out_w;
            im2col_chunk(ce, lw, lh) + (recon + offsets + coords + hr) * elem_bytes
        }
    }
}
