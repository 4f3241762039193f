//! The multi-scale training loop: one randomly-scaled sub-batch at a
//! time, gradients summed in fixed name order and averaged over the
//! sub-batch count, one Adam step, optional EMA shadow.

use std::collections::BTreeMap;
use std::path::Path;

use igkit_core::autograd::backward;
use igkit_core::optim::Adam;
use igkit_core::{Rng, Tensor};
use igkit_model::{total_loss, SrModel};

use crate::config::TrainConfig;
use crate::data::{sample_task, sample_task_at, Dataset};
use crate::error::{Result, TrainError};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.99;
const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct SubBatchLog {
    pub scale: usize,
    pub l1: f64,
    pub freq: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub rows: Vec<SubBatchLog>,
}

impl StepMetrics {
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{:.8},{:.8},{:.8},{:.8}",
                    self.step, r.scale, r.l1, r.freq, r.total, self.lr
                )
            })
            .collect()
    }

    pub fn mean_total(&self) -> f64 {
        self.rows.iter().map(|r| r.total).sum::<f64>() / self.rows.len().max(1) as f64
    }
}

pub const CSV_HEADER: &str = "step,scale,l1,freq,total,lr";

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: SrModel,
    adam: Adam,
    ema: Option<BTreeMap<String, Tensor>>,
    task_rng: Rng,
    step: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut master = Rng::new(cfg.seed);
        let mut init_rng = master.fork(1);
        let task_rng = master.fork(2);
        let model = SrModel::init(cfg.model_cfg(), &mut init_rng)?;
        let ema = if cfg.ema { Some(model.state_dict()) } else { None };
        Ok(Trainer {
            adam: Adam::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS),
            ema,
            task_rng,
            step: 0,
            model,
            cfg,
        })
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// Stacks `count` tasks at one scale into batch tensors.
    fn gather_sub_batch(&mut self, ds: &Dataset) -> Result<(Tensor, Tensor, usize)> {
        let per_sub = self.cfg.batch / self.cfg.sub_batches;
        let first = sample_task(
            &mut self.task_rng,
            ds,
            &self.cfg.scales,
            self.cfg.patch_size,
            self.cfg.augment,
        )?;
        let r = first.r;
        let mut lrs = vec![first.lr];
        let mut hrs = vec![first.hr];
        for _ in 1..per_sub {
            let t = sample_task_at(
                &mut self.task_rng,
                ds,
                r,
                self.cfg.patch_size,
                self.cfg.augment,
            )?;
            lrs.push(t.lr);
            hrs.push(t.hr);
        }
        let lr_refs: Vec<&Tensor> = lrs.iter().collect();
        let hr_refs: Vec<&Tensor> = hrs.iter().collect();
        Ok((Tensor::concat(&lr_refs, 0)?, Tensor::concat(&hr_refs, 0)?, r))
    }

    pub fn train_step(&mut self, ds: &Dataset) -> Result<StepMetrics> {
        let lr_now = self.cfg.lr_at(self.step);
        let loss_cfg = self.cfg.loss_cfg();
        let mut grad_sum: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut rows = Vec::with_capacity(self.cfg.sub_batches);
        for _ in 0..self.cfg.sub_batches {
            let (lr_t, hr_t, r) = self.gather_sub_batch(ds)?;
            let g = igkit_core::Graph::new();
            let vars = self.model.mount(&g, true)?;
            let lr_var = g.constant(lr_t);
            let hr_var = g.constant(hr_t);
            let sr = vars.forward(&g, &lr_var, r)?;
            let parts = total_loss(&sr, &hr_var, &loss_cfg)?;
            let total = parts.total.value().data()[0];
            if !total.is_finite() {
                return Err(TrainError::NonFinite {
                    step: self.step,
                    scale: r,
                    l1: parts.pixel,
                    freq: parts.freq,
                });
            }
            let grads = backward(&parts.total)?;
            // Fixed name order makes the reduction deterministic.
            for (name, grad) in grads {
                match grad_sum.get_mut(&name) {
                    Some(acc) => *acc = acc.add(&grad)?,
                    None => {
                        grad_sum.insert(name, grad);
                    }
                }
            }
            rows.push(SubBatchLog { scale: r, l1: parts.pixel, freq: parts.freq, total });
        }
        let scale = 1.0 / self.cfg.sub_batches as f64;
        let grad_avg: BTreeMap<String, Tensor> =
            grad_sum.into_iter().map(|(k, v)| (k, v.scale(scale))).collect();
        let mut params = self.model.state_dict();
        self.adam.step(&mut params, &grad_avg, lr_now)?;
        self.model.assign(&params)?;
        if let Some(ema) = &mut self.ema {
            // Warmed-up decay so the shadow tracks early steps instead
            // of clinging to the random init on short runs.
            let t = (self.step + 1) as f64;
            let d = self.cfg.ema_decay.min((1.0 + t) / (10.0 + t));
            for (name, shadow) in ema.iter_mut() {
                let p = &params[name];
                *shadow = shadow.scale(d).add(&p.scale(1.0 - d))?;
            }
        }
        self.step += 1;
        Ok(StepMetrics { step: self.step - 1, lr: lr_now, rows })
    }

    pub fn run(&mut self, ds: &Dataset, mut on_step: impl FnMut(&StepMetrics)) -> Result<()> {
        for _ in self.step..self.cfg.iterations {
            let metrics = self.train_step(ds)?;
            on_step(&metrics);
        }
        Ok(())
    }

    /// The model to evaluate and ship: EMA shadow when enabled, live
    /// parameters otherwise.
    pub fn eval_model(&self) -> Result<SrModel> {
        match &self.ema {
            Some(ema) => {
                let mut m = self.model.clone();
                m.assign(ema)?;
                Ok(m)
            }
            None => Ok(self.model.clone()),
        }
    }

    /// Writes parameters plus optimizer and EMA state.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut extra = self.adam.state_dict();
        if let Some(ema) = &self.ema {
            for (k, v) in ema {
                extra.insert(format!("ema.{k}"), v.clone());
            }
        }
        extra.insert("trainer.step".to_string(), Tensor::scalar(self.step as f64));
        self.model.save(path, &extra)?;
        Ok(())
    }
}

/// FNV-1a over a file, handy for printing checkpoint fingerprints.
pub fn fnv64_file(path: &Path) -> Result<u64> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    Ok(fnv64(&bytes))
}

pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
