//! LARS optimizer with momentum and weight decay, plus the linear-warmup +
//! cosine-annealing learning-rate schedule with linear batch-size scaling.

use crate::error::{Error, Result};
use std::collections::{BTreeSet, HashMap};

/// Optimizer and schedule settings. Scalar parameters such as the loss
/// bias live in `lars_excluded`: they are updated by plain momentum SGD
/// without weight decay, since a scalar's norm makes trust ratios
/// degenerate.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub trust_coefficient: f64,
    pub eps: f64,
    pub lars_excluded: BTreeSet<String>,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub reference_batch: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            base_lr: 0.3,
            momentum: 0.9,
            weight_decay: 1e-6,
            trust_coefficient: 0.001,
            eps: 1e-9,
            lars_excluded: BTreeSet::new(),
            warmup_epochs: 10,
            total_epochs: 30,
            batch_size: 64,
            reference_batch: 64,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "warmup ({}) exceeds total epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 || self.reference_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.weight_decay < 0.0 || self.trust_coefficient <= 0.0 || self.eps <= 0.0 {
            return Err(Error::Config("weight_decay/trust/eps out of range".into()));
        }
        Ok(())
    }

    /// Base learning rate after linear batch-size scaling.
    pub fn scaled_base_lr(&self) -> f64 {
        self.base_lr * self.batch_size as f64 / self.reference_batch as f64
    }
}

/// Learning rate at a fractional epoch position: linear ramp from 0 to the
/// scaled base over the warmup, then cosine decay to 0 at `total_epochs`.
/// The two branches agree at the junction.
pub fn lr_at(config: &OptimizerConfig, epoch_fraction: f64) -> Result<f64> {
    let total = config.total_epochs as f64;
    if !epoch_fraction.is_finite() || epoch_fraction < 0.0 || epoch_fraction > total {
        return Err(Error::InvalidArgument(format!(
            "epoch fraction {epoch_fraction} outside [0, {total}]"
        )));
    }
    let scaled = config.scaled_base_lr();
    let warmup = config.warmup_epochs as f64;
    if epoch_fraction < warmup {
        return Ok(scaled * epoch_fraction / warmup);
    }
    let progress = if total > warmup {
        (epoch_fraction - warmup) / (total - warmup)
    } else {
        1.0
    };
    Ok(scaled * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// LARS state: one momentum buffer per named tensor.
#[derive(Debug)]
pub struct Lars {
    config: OptimizerConfig,
    velocity: HashMap<String, Vec<f64>>,
}

fn l2_norm(values: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in values {
        s += v * v;
    }
    s.sqrt()
}

impl Lars {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Lars {
            config,
            velocity: HashMap::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// One update over `(name, parameter, gradient)` triples.
    ///
    /// Non-excluded tensors: `local_lr = trust * |w| / (|g| + wd * |w| + eps)`,
    /// `v = momentum * v + lr * local_lr * (g + wd * w)`, `w -= v`.
    /// Excluded tensors use plain momentum SGD without weight decay.
    pub fn step<'a, I>(&mut self, tensors: I, lr: f64) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut [f64], &'a [f64])>,
    {
        if !(lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be >= 0")));
        }
        for (name, w, g) in tensors {
            if w.len() != g.len() {
                return Err(Error::Shape(format!(
                    "tensor `{name}`: {} params vs {} grads",
                    w.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGrad(name.to_string()));
            }
            let v = self
                .velocity
                .entry(name.to_string())
                .or_insert_with(|| vec![0.0; w.len()]);
            let m = self.config.momentum;
            if self.config.lars_excluded.contains(name) {
                for k in 0..w.len() {
                    v[k] = m * v[k] + lr * g[k];
                    w[k] -= v[k];
                }
            } else {
                let wd = self.config.weight_decay;
                let w_norm = l2_norm(w);
                let g_norm = l2_norm(g);
                let local_lr =
                    self.config.trust_coefficient * w_norm / (g_norm + wd * w_norm + self.config.eps);
                for k in 0..w.len() {
                    v[k] = m * v[k] + lr * local_lr * (g[k] + wd * w[k]);
                    w[k] -= v[k];
                }
            }
        }
        Ok(())
    }
}
