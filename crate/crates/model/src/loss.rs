//! Training objective: pixel L1 plus a frequency-domain L1 on the
//! stacked real/imaginary DFT components, means over all components so
//! the weight keeps its meaning across resolutions.

use igkit_core::autograd::Var;
use igkit_core::{CoreError, Result};

#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    pub lambda_freq: f64,
    pub freq_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_freq: 0.05, freq_enabled: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_freq < 0.0 {
            return Err(CoreError::invalid(
                "loss",
                format!("lambda_freq {} must be >= 0", self.lambda_freq),
            ));
        }
        Ok(())
    }
}

/// Scalar loss node plus the component values for logging.
pub struct LossParts {
    pub total: Var,
    pub pixel: f64,
    pub freq: f64,
}

pub fn total_loss(sr: &Var, hr: &Var, cfg: &LossConfig) -> Result<LossParts> {
    cfg.validate()?;
    if sr.shape() != hr.shape() {
        return Err(CoreError::dims(
            "total_loss",
            format!("{:?} vs {:?}", sr.shape(), hr.shape()),
        ));
    }
    let pixel = sr.sub(hr).abs().mean();
    let pixel_val = pixel.value().data()[0];
    if !cfg.freq_enabled || cfg.lambda_freq == 0.0 {
        return Ok(LossParts { total: pixel, pixel: pixel_val, freq: 0.0 });
    }
    let freq = sr
        .dft2_stacked()
        .sub(&hr.dft2_stacked())
        .abs()
        .mean();
    let freq_val = freq.value().data()[0];
    let total = pixel.add(&freq.scale(cfg.lambda_freq));
    Ok(LossParts { total, pixel: pixel_val, freq: freq_val })
}
