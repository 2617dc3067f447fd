//! Update rules and learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shape(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Shape { expected, actual });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

/// Plain gradient descent: `theta -= lr * grad`. No momentum, no decay.
pub fn sgd_step(params: &mut [f64], grad: &[f64], cfg: SgdConfig) -> Result<()> {
    check_shape(params.len(), grad.len())?;
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= cfg.learning_rate * g;
    }
    Ok(())
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `grad` in place so that its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub grad_clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        AdamState {
            config,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One update at learning rate `lr`:
    ///
    /// ```text
    /// m <- b1 m + (1 - b1) g
    /// v <- b2 v + (1 - b2) g^2
    /// theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
    /// ```
    ///
    /// With `grad_clip` set, `g` is first rescaled to that global norm.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        check_shape(self.m.len(), params.len())?;
        check_shape(self.m.len(), grad.len())?;
        let c = self.config;
        let clipped;
        let g: &[f64] = match c.grad_clip {
            Some(max) => {
                let mut buf = grad.to_vec();
                clip_grad(&mut buf, max);
                clipped = buf;
                &clipped
            }
            None => grad,
        };
        self.t += 1;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * params[i]);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// Linear warm-up, then linear decay to zero.
    Linear,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub total_steps: usize,
    pub warmup_proportion: f64,
    pub base_lr: f64,
}

impl Schedule {
    pub fn warmup_steps(&self) -> usize {
        (self.warmup_proportion * self.total_steps as f64).ceil() as usize
    }

    /// Learning rate after `step` completed updates. Past `total_steps` the
    /// rate is zero.
    pub fn lr_at(&self, step: usize) -> f64 {
        if step > self.total_steps {
            return 0.0;
        }
        if self.kind == ScheduleKind::Constant {
            return self.base_lr;
        }
        let warm = self.warmup_steps();
        if step < warm {
            self.base_lr * step as f64 / warm as f64
        } else if self.total_steps == warm {
            // warm-up spans the whole run
            if step == self.total_steps { 0.0 } else { self.base_lr }
        } else {
            self.base_lr * (self.total_steps - step) as f64 / (self.total_steps - warm) as f64
        }
    }
}
