use std::f64::consts::PI;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ForecastInstance;
use crate::error::{PipeError, Result};

use super::input::ModelInput;
use super::transformer::Forecaster;
use super::ModelConfig;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub min_lr_ratio: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip: f64,
    /// Seed of the example shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            max_steps: None,
            lr: 3e-4,
            min_lr_ratio: 0.1,
            warmup_steps: 10,
            batch_size: 8,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PipeError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad(format!("min_lr_ratio must lie in [0, 1], got {}", self.min_lr_ratio));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if self.weight_decay < 0.0 || self.grad_clip <= 0.0 || self.eps <= 0.0 {
            return bad("weight_decay must be >= 0, grad_clip and eps > 0".into());
        }
        Ok(())
    }

    pub fn total_steps(&self, n_examples: usize) -> usize {
        let per_epoch = n_examples.div_ceil(self.batch_size);
        let total = per_epoch * self.epochs;
        self.max_steps.map_or(total, |m| m.min(total))
    }

    /// Linear warmup then cosine decay to `min_lr_ratio * lr`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let floor = self.lr * self.min_lr_ratio;
        floor + 0.5 * (self.lr - floor) * (1.0 + (PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss of every optimizer step.
    pub loss_trace: Vec<f64>,
    /// Mean loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub param_count: usize,
}

struct AdamW {
    m: Vec<f32>,
    v: Vec<f32>,
    decay: Vec<bool>,
    t: i32,
}

impl AdamW {
    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64, tc: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (tc.beta1 as f32, tc.beta2 as f32);
        let bc1 = 1.0 - b1.powi(self.t);
        let bc2 = 1.0 - b2.powi(self.t);
        let (lr, wd, eps) = (lr as f32, tc.weight_decay as f32, tc.eps as f32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            if self.decay[i] {
                params[i] -= lr * wd * params[i];
            }
            params[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

/// Train a fresh model on forecast windows.
pub fn train(
    cfg: ModelConfig,
    instances: &[ForecastInstance],
    tc: &TrainConfig,
) -> Result<(Forecaster, TrainReport)> {
    let mut model = Forecaster::new(cfg)?;
    let report = fit(&mut model, instances.len(), tc, |m, i| {
        ModelInput::training(&m.cfg, &m.vocab, &instances[i])
    })?;
    Ok((model, report))
}

/// Optimize `model` over `n` examples produced on demand by `example`.
pub fn fit(
    model: &mut Forecaster,
    n: usize,
    tc: &TrainConfig,
    mut example: impl FnMut(&Forecaster, usize) -> Result<ModelInput>,
) -> Result<TrainReport> {
    tc.validate()?;
    if n == 0 {
        return Err(PipeError::Data("training split is empty".into()));
    }
    let total = tc.total_steps(n);
    let mut opt = AdamW {
        m: vec![0.0; model.param_count()],
        v: vec![0.0; model.param_count()],
        decay: model.params.layout.decay_mask(),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut report = TrainReport {
        loss_trace: Vec::with_capacity(total),
        epoch_losses: Vec::new(),
        steps: 0,
        param_count: model.param_count(),
    };
    info!(
        "training {} parameters on {n} examples for {total} steps",
        model.param_count()
    );
    let mut grads = vec![0.0f32; model.param_count()];
    'epochs: for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_batches = 0;
        for batch in order.chunks(tc.batch_size) {
            if report.steps >= total {
                break 'epochs;
            }
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let input = example(model, i)?;
                let (loss, g) = model.loss_and_grad(&input)?;
                batch_loss += loss;
                for (a, b) in grads.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f32;
            grads.iter_mut().for_each(|g| *g *= scale);
            batch_loss /= batch.len() as f64;
            let norm = grads.iter().map(|&g| (g as f64) * (g as f64)).sum::<f64>().sqrt();
            if !batch_loss.is_finite() || !norm.is_finite() {
                return Err(PipeError::Divergence(format!(
                    "non-finite loss {batch_loss} or gradient norm {norm} at step {} (epoch {epoch})",
                    report.steps
                )));
            }
            if norm > tc.grad_clip {
                let c = (tc.grad_clip / norm) as f32;
                grads.iter_mut().for_each(|g| *g *= c);
            }
            let lr = tc.lr_at(report.steps, total);
            opt.step(&mut model.params.values, &grads, lr, tc);
            debug!("step {} loss {batch_loss:.4} grad norm {norm:.3} lr {lr:.2e}", report.steps);
            report.loss_trace.push(batch_loss);
            report.steps += 1;
            epoch_sum += batch_loss;
            epoch_batches += 1;
        }
        if epoch_batches > 0 {
            let mean = epoch_sum / epoch_batches as f64;
            info!("epoch {epoch}: mean loss {mean:.4}");
            report.epoch_losses.push(mean);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, SimParams};

    #[test]
    fn schedule_warms_up_then_decays() {
        let tc = TrainConfig {
            warmup_steps: 4,
            ..Default::default()
        };
        let total = 20;
        assert!((tc.lr_at(0, total) - tc.lr / 4.0).abs() < 1e-15);
        assert!((tc.lr_at(3, total) - tc.lr).abs() < 1e-15);
        assert!((tc.lr_at(4, total) - tc.lr).abs() < 1e-15);
        assert!((tc.lr_at(total, total) - tc.lr * tc.min_lr_ratio).abs() < 1e-15);
        for s in 4..total {
            assert!(tc.lr_at(s + 1, total) <= tc.lr_at(s, total));
        }
        assert_eq!(tc.total_steps(17), 3);
        let capped = TrainConfig {
            epochs: 5,
            max_steps: Some(7),
            ..Default::default()
        };
        assert_eq!(capped.total_steps(17), 7);
    }

    #[test]
    fn rejects_bad_settings() {
        let tc = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(tc.validate().is_err());
        let cfg = ModelConfig::tiny(16, 1, 2);
        assert!(train(cfg, &[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = ModelConfig::tiny(16, 1, 2);
        let ds = Dataset::synthesize(&SimParams::default(), 1, 24, &cfg.image).unwrap();
        let inst = ds.windows(&ds.sequence_ids(), 12, 12).unwrap();
        let mut model = Forecaster::new(cfg).unwrap();
        model.params.values[0] = f32::NAN;
        let vocab = model.vocab.clone();
        let err = fit(&mut model, 1, &TrainConfig::default(), |m, i| {
            let mut input = ModelInput::training(&m.cfg, &vocab, &inst[i])?;
            // route the poisoned embedding row into the sequence
            input.slots[0] = crate::model::input::TokenSlot::Text(0);
            Ok(input)
        })
        .unwrap_err();
        assert!(matches!(err, PipeError::Divergence(_)), "{err}");
        assert_eq!(err.exit_code(), 4);
    }
}
