//! Held-out evaluation: modulo-crop the reference, synthesize the LR
//! input, upsample (through the instantiated bank for the multi-scale
//! variants), quantize, and score Y-channel PSNR/SSIM with the
//! boundary crop, next to the plain bicubic baseline.

use igkit_image::{bicubic_resize, psnr_y, ssim_y, ImageBuffer};
use igkit_model::{SrModel, Variant};

use crate::data::Dataset;
use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    /// Debug mode: the "upsampler" copies the LR input (only sensible
    /// at scale 1); exercises the metric plumbing end to end.
    pub passthrough: bool,
}

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub scale: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub psnr_bicubic: f64,
    pub ssim_bicubic: f64,
    pub images: usize,
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, scale: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.scale == scale)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scale,psnr,ssim,psnr_bicubic,ssim_bicubic,images\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.8},{:.6},{:.8},{}\n",
                r.scale, r.psnr, r.ssim, r.psnr_bicubic, r.ssim_bicubic, r.images
            ));
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::from(
            "scale |   psnr   |  ssim   | bicubic psnr | bicubic ssim | images\n",
        );
        out.push_str("------+----------+---------+--------------+--------------+-------\n");
        for r in &self.rows {
            out.push_str(&format!(
                "  x{:<3}| {:>8.4} | {:.5} | {:>12.4} | {:>12.5} | {:>5}\n",
                r.scale, r.psnr, r.ssim, r.psnr_bicubic, r.ssim_bicubic, r.images
            ));
        }
        out
    }
}

/// Mean finite PSNR; infinite entries (identical images) are kept as a
/// saturated 99 dB so means stay meaningful.
fn fold_psnr(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        99.0
    }
}

pub fn evaluate(model: &SrModel, ds: &Dataset, scales: &[usize]) -> Result<EvalReport> {
    evaluate_with(model, ds, scales, EvalOptions::default())
}

pub fn evaluate_with(
    model: &SrModel,
    ds: &Dataset,
    scales: &[usize],
    opts: EvalOptions,
) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(TrainError::Data("evaluation dataset is empty".into()));
    }
    if scales.is_empty() {
        return Err(TrainError::Config("no scales to evaluate".into()));
    }
    // Multi-scale variants run through the deployment artifact.
    let bank = match model.cfg.variant {
        Variant::IgConv | Variant::IgConvPlus if !opts.passthrough => {
            Some(model.instantiate(scales)?)
        }
        _ => None,
    };
    let mut rows = Vec::with_capacity(scales.len());
    for &r in scales {
        if r < 1 {
            return Err(TrainError::Config(format!("scale {r} must be >= 1")));
        }
        let (mut psnr_sum, mut ssim_sum, mut bp_sum, mut bs_sum) = (0.0, 0.0, 0.0, 0.0);
        let mut count = 0usize;
        for img in &ds.images {
            let hr_img = img.modulo_crop(r);
            if hr_img.width < r * 16 || hr_img.height < r * 16 {
                // Too small to score meaningfully under the border crop.
                continue;
            }
            let hr_t = hr_img.to_tensor();
            let lr_t = bicubic_resize(&hr_t, 1.0 / r as f64)?;
            let sr_t = if opts.passthrough {
                if r != 1 {
                    return Err(TrainError::Config(
                        "passthrough debug mode only makes sense at scale 1".into(),
                    ));
                }
                lr_t.clone()
            } else {
                match &bank {
                    Some(bank) => {
                        let m = model.encode(&lr_t)?;
                        bank.upsample(&lr_t, &m, r)?
                    }
                    None => model.super_resolve(&lr_t, r)?,
                }
            };
            let sr_img = ImageBuffer::from_tensor(&sr_t)?;
            let bi_t = bicubic_resize(&lr_t, r as f64)?;
            let bi_img = ImageBuffer::from_tensor(&bi_t)?;
            let border = r.max(1);
            psnr_sum += fold_psnr(psnr_y(&sr_img, &hr_img, border)?);
            ssim_sum += ssim_y(&sr_img, &hr_img, border)?;
            bp_sum += fold_psnr(psnr_y(&bi_img, &hr_img, border)?);
            bs_sum += ssim_y(&bi_img, &hr_img, border)?;
            count += 1;
        }
        if count == 0 {
            return Err(TrainError::Data(format!(
                "no evaluation image is large enough for scale x{r}"
            )));
        }
        let n = count as f64;
        rows.push(EvalRow {
            scale: r,
            psnr: psnr_sum / n,
            ssim: ssim_sum / n,
            psnr_bicubic: bp_sum / n,
            ssim_bicubic: bs_sum / n,
            images: count,
        });
    }
    Ok(EvalReport { rows })
}
