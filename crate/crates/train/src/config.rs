//! Flat key=value training configuration with a typed schema.
//! Unknown keys are hard errors: a config that silently ignores a typo
//! is not reproducible.

use std::path::Path;

use igkit_model::Variant;

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Cosine decay from the peak to 1% of it.
    Cosine,
    /// Halves at 50%, 75%, and 87.5% of the run.
    Step,
    Constant,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub variant: Variant,
    pub scales: Vec<usize>,
    pub patch_size: usize,
    /// Total images per optimizer step.
    pub batch: usize,
    /// Sub-batches per step, one randomly drawn scale each.
    pub sub_batches: usize,
    pub iterations: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub lambda_freq: f64,
    pub freq: bool,
    pub fgrep: bool,
    pub ema: bool,
    pub ema_decay: f64,
    pub augment: bool,
    pub seed: u64,
    pub ce: usize,
    pub blocks: usize,
    pub c_mid: usize,
    pub ch_h: usize,
    pub hidden_h: usize,
    pub ch_s: usize,
    pub hidden_s: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::IgConvPlus,
            scales: vec![2, 3, 4],
            patch_size: 48,
            batch: 3,
            sub_batches: 3,
            iterations: 5000,
            lr: 1e-3,
            schedule: Schedule::Cosine,
            lambda_freq: 0.05,
            freq: true,
            fgrep: true,
            ema: true,
            ema_decay: 0.999,
            augment: true,
            seed: 0,
            ce: 32,
            blocks: 4,
            c_mid: 64,
            ch_h: 256,
            hidden_h: 4,
            ch_s: 128,
            hidden_s: 2,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |s: String| Err(TrainError::Config(s));
        if self.scales.is_empty() {
            return fail("scales must be non-empty".into());
        }
        if self.scales.iter().any(|&r| r < 1) {
            return fail(format!("scales must be >= 1, got {:?}", self.scales));
        }
        if self.patch_size == 0 {
            return fail("patch_size must be positive".into());
        }
        if self.sub_batches == 0 || self.batch == 0 {
            return fail("batch and sub_batches must be positive".into());
        }
        if self.batch % self.sub_batches != 0 {
            return fail(format!(
                "batch {} must be divisible by sub_batches {}",
                self.batch, self.sub_batches
            ));
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if self.lambda_freq < 0.0 {
            return fail(format!("lambda_freq {} must be >= 0", self.lambda_freq));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail(format!("ema_decay {} must be in [0, 1)", self.ema_decay));
        }
        match self.variant {
            Variant::SpConv | Variant::SpConvPlus if self.scales.len() != 1 => {
                return fail(format!(
                    "{} is scale-specific; configure exactly one scale",
                    self.variant.tag()
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Learning rate at a given step.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.iterations <= 1 {
            return self.lr;
        }
        let t = step.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => {
                let floor = 0.01 * self.lr;
                floor + 0.5 * (self.lr - floor) * (1.0 + (std::f64::consts::PI * t).cos())
            }
            Schedule::Step => {
                let halvings = if t < 0.5 {
                    0
                } else if t < 0.75 {
                    1
                } else if t < 0.875 {
                    2
                } else {
                    3
                };
                self.lr * 0.5f64.powi(halvings)
            }
        }
    }

    pub fn parse_file(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(TrainError::Config(format!(
                    "line {}: expected key = value, got {raw:?}",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str, v: &str| {
            TrainError::Config(format!("key {what:?}: cannot parse value {v:?}"))
        };
        let parse_usize =
            |k: &str, v: &str| -> Result<usize> { v.parse().map_err(|_| bad(k, v)) };
        let parse_f64 = |k: &str, v: &str| -> Result<f64> { v.parse().map_err(|_| bad(k, v)) };
        let parse_bool = |k: &str, v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "on" => Ok(true),
                "false" | "0" | "off" => Ok(false),
                _ => Err(bad(k, v)),
            }
        };
        match key {
            "variant" => {
                self.variant = Variant::from_tag(value)
                    .map_err(|_| TrainError::Config(format!("unknown variant {value:?}")))?;
                if matches!(self.variant, Variant::SpConv | Variant::SpConvPlus | Variant::IgConv) {
                    // FGRep and the frequency term stay whatever the file
                    // sets explicitly; only the default flips here.
                    self.fgrep = false;
                }
            }
            "scales" => {
                let mut scales = Vec::new();
                for part in value.split(',') {
                    scales.push(parse_usize("scales", part.trim())?);
                }
                self.scales = scales;
            }
            "patch_size" => self.patch_size = parse_usize(key, value)?,
            "batch" => self.batch = parse_usize(key, value)?,
            "sub_batches" => self.sub_batches = parse_usize(key, value)?,
            "iterations" => self.iterations = parse_usize(key, value)?,
            "lr" => self.lr = parse_f64(key, value)?,
            "schedule" => {
                self.schedule = match value {
                    "cosine" => Schedule::Cosine,
                    "step" => Schedule::Step,
                    "constant" => Schedule::Constant,
                    _ => return Err(TrainError::Config(format!("unknown schedule {value:?}"))),
                }
            }
            "lambda_freq" => self.lambda_freq = parse_f64(key, value)?,
            "freq" => self.freq = parse_bool(key, value)?,
            "fgrep" => self.fgrep = parse_bool(key, value)?,
            "ema" => self.ema = parse_bool(key, value)?,
            "ema_decay" => self.ema_decay = parse_f64(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "ce" => self.ce = parse_usize(key, value)?,
            "blocks" => self.blocks = parse_usize(key, value)?,
            "c_mid" => self.c_mid = parse_usize(key, value)?,
            "ch_h" => self.ch_h = parse_usize(key, value)?,
            "hidden_h" => self.hidden_h = parse_usize(key, value)?,
            "ch_s" => self.ch_s = parse_usize(key, value)?,
            "hidden_s" => self.hidden_s = parse_usize(key, value)?,
            "log_every" => self.log_every = parse_usize(key, value)?,
            other => {
                return Err(TrainError::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    pub fn model_cfg(&self) -> igkit_model::SrModelCfg {
        igkit_model::SrModelCfg {
            variant: self.variant,
            encoder: igkit_model::EncoderCfg { ce: self.ce, blocks: self.blocks },
            k: 3,
            ch_h: self.ch_h,
            hidden_h: self.hidden_h,
            ch_s: self.ch_s,
            hidden_s: self.hidden_s,
            c_mid: self.c_mid,
            fgrep: self.fgrep,
            scales: self.scales.clone(),
        }
    }

    pub fn loss_cfg(&self) -> igkit_model::LossConfig {
        igkit_model::LossConfig { lambda_freq: self.lambda_freq, freq_enabled: self.freq }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_a_full_file() {
        let text = "\
# desk-scale run
variant = igconv_plus
scales = 2,3,4
patch_size = 48
batch = 6
sub_batches = 3
iterations = 100  # inline comment
lr = 0.001
schedule = cosine
lambda_freq = 0.05
seed = 7
";
        let cfg = TrainConfig::parse_str(text).unwrap();
        assert_eq!(cfg.batch, 6);
        assert_eq!(cfg.scales, vec![2, 3, 4]);
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = TrainConfig::parse_str("patch_sizee = 48\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("patch_sizee"), "{msg}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(TrainConfig::parse_str("batch = many\n").is_err());
        assert!(TrainConfig::parse_str("variant = igconv_ultra\n").is_err());
        assert!(TrainConfig::parse_str("batch = 5\nsub_batches = 2\n").is_err());
        assert!(TrainConfig::parse_str("lr = -0.1\n").is_err());
        assert!(TrainConfig::parse_str("scales = 2,0\n").is_err());
    }

    #[test]
    fn cosine_schedule_spans_peak_to_floor() {
        let mut cfg = TrainConfig::default();
        cfg.iterations = 101;
        assert!((cfg.lr_at(0) - cfg.lr).abs() < 1e-12);
        assert!((cfg.lr_at(100) - 0.01 * cfg.lr).abs() < 1e-9);
        assert!(cfg.lr_at(50) < cfg.lr && cfg.lr_at(50) > 0.01 * cfg.lr);
    }

    #[test]
    fn step_schedule_halves_at_milestones() {
        let mut cfg = TrainConfig::default();
        cfg.schedule = Schedule::Step;
        cfg.iterations = 1001;
        assert_eq!(cfg.lr_at(0), cfg.lr);
        assert_eq!(cfg.lr_at(600), cfg.lr * 0.5);
        assert_eq!(cfg.lr_at(800), cfg.lr * 0.25);
        assert_eq!(cfg.lr_at(950), cfg.lr * 0.125);
    }

    #[test]
    fn scale_specific_variants_take_one_scale() {
        let mut cfg = TrainConfig::default();
        cfg.variant = Variant::SpConv;
        cfg.scales = vec![2, 3];
        assert!(cfg.validate().is_err());
        cfg.scales = vec![3];
        cfg.validate().unwrap();
    }
}
