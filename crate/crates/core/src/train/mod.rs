//! Training procedures: ERM, the adversarial baseline, and SUML.
//!
//! All three share one [`Session`] loop: mini-batch steps counted in
//! epochs, validation after every epoch, best-validation-loss model
//! selection with patience-based early stopping, and a checkpoint that
//! captures everything needed to resume bit-for-bit.

mod checkpoint;
pub mod meta;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ResumeState, CHECKPOINT_VERSION};
pub use meta::{first_order_meta_gradient, MetaStep};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{sample_indices, Dataset};
use crate::error::{Error, Result};
use crate::model::{self, EncodeMode, GradVector, Layout, ModelParams};
use crate::optim::{AdamConfig, AdamState, Schedule, ScheduleKind};
use crate::rng::{self, stream, Rng, RngState};
use crate::text::{EncodedInstance, Vocab};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Inner-loop SGD step size (SUML only).
    pub inner_lr: f64,
    /// Adam learning rate: the outer step size for SUML and the only rate
    /// for ERM and adversarial training.
    pub outer_lr: f64,
    /// Inner updates per outer update.
    pub k: usize,
    pub inner_batch_size: usize,
    pub meta_test_batch_size: usize,
    pub train_batch_size: usize,
    pub max_epochs: usize,
    /// Evaluations without improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
    pub warmup_proportion: f64,
    pub schedule: ScheduleKind,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: Option<f64>,
    pub lambda_loss: f64,
    pub lambda_enc: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Choice slots of the adversary head.
    pub max_choices: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            inner_lr: 0.01,
            outer_lr: 1e-5,
            k: 5,
            inner_batch_size: 8,
            meta_test_batch_size: 8,
            train_batch_size: 32,
            max_epochs: 10,
            early_stop_patience: 2,
            warmup_proportion: 0.06,
            schedule: ScheduleKind::Linear,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            grad_clip: Some(1.0),
            lambda_loss: 0.5,
            lambda_enc: 0.5,
            embed_dim: 32,
            hidden_dim: 32,
            max_choices: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 2 {
            return bad(format!("k must be at least 2, got {}", self.k));
        }
        for (name, v) in [("inner_lr", self.inner_lr), ("outer_lr", self.outer_lr)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("inner_batch_size", self.inner_batch_size),
            ("meta_test_batch_size", self.meta_test_batch_size),
            ("train_batch_size", self.train_batch_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("max_choices", self.max_choices),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_proportion) {
            return bad(format!("warmup_proportion must lie in [0, 1), got {}", self.warmup_proportion));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        for (name, v) in [("lambda_loss", self.lambda_loss), ("lambda_enc", self.lambda_enc)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if self.weight_decay < 0.0 || self.adam_eps <= 0.0 {
            return bad("weight_decay must be >= 0 and adam_eps > 0".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Cross-entropy on full inputs.
    Erm,
    /// Cross-entropy on choice-only inputs (the cue probe).
    Contextless,
    Adversarial,
    Suml,
}

impl Method {
    pub fn eval_mode(self) -> EncodeMode {
        match self {
            Method::Contextless => EncodeMode::Contextless,
            _ => EncodeMode::Full,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Erm => "erm",
            Method::Contextless => "contextless",
            Method::Adversarial => "adversarial",
            Method::Suml => "suml",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryRecord {
    pub train_scorer_loss: f64,
    pub train_adv_loss: f64,
    pub val_adv_loss: f64,
    pub val_adv_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub epoch: usize,
    pub step: usize,
    /// Mean batch loss over the epoch: the scorer loss for ERM and the
    /// adversarial baseline, the meta-test loss at the adapted parameters
    /// for SUML.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    pub best_step: Option<usize>,
    pub best_val_loss: Option<f64>,
    /// `None` while the run is in progress.
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    fn new() -> Self {
        TrainHistory {
            records: Vec::new(),
            best_step: None,
            best_val_loss: None,
            stop_reason: None,
        }
    }

    pub fn best_record(&self) -> Option<&EvalRecord> {
        let step = self.best_step?;
        self.records.iter().find(|r| r.step == step)
    }
}

/// Data and state of one training run.
pub struct Session {
    method: Method,
    cfg: TrainConfig,
    vocab: Vocab,
    train: Vec<EncodedInstance>,
    val: Vec<EncodedInstance>,
    meta: Vec<EncodedInstance>,
    params: ModelParams,
    best: ModelParams,
    adam: AdamState,
    rng: Rng,
    epoch: usize,
    step: usize,
    bad_evals: usize,
    history: TrainHistory,
}

fn encode_all(vocab: &Vocab, ds: &Dataset) -> Vec<EncodedInstance> {
    vocab.encode_dataset(ds)
}

impl Session {
    pub fn new(
        method: Method,
        train: &Dataset,
        val: &Dataset,
        meta_test: Option<&Dataset>,
        vocab: &Vocab,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Config("training and validation sets must be nonempty".into()));
        }
        let meta = match (method, meta_test) {
            (Method::Suml, Some(m)) => {
                if m.is_empty() {
                    return Err(Error::Config("meta-test set is empty".into()));
                }
                let ids = train.ids();
                let overlap: Vec<&str> = m.iter().map(|i| i.id.as_str()).filter(|id| ids.contains(id)).collect();
                if let Some(first) = overlap.first() {
                    return Err(Error::Overlap {
                        count: overlap.len(),
                        first: first.to_string(),
                    });
                }
                encode_all(vocab, m)
            }
            (Method::Suml, None) => return Err(Error::Config("SUML needs a meta-test set".into())),
            _ => Vec::new(),
        };
        if method == Method::Adversarial && train.max_choices() > cfg.max_choices {
            let inst = train.iter().find(|i| i.num_choices() > cfg.max_choices).unwrap();
            return Err(Error::TooManyChoices {
                id: inst.id.clone(),
                choices: inst.num_choices(),
                max: cfg.max_choices,
            });
        }
        let layout = Layout::new(vocab.len(), cfg.embed_dim, cfg.hidden_dim, cfg.max_choices);
        let params = ModelParams::init(layout, &mut rng::derived(cfg.seed, stream::INIT));
        Ok(Session {
            method,
            cfg: cfg.clone(),
            vocab: vocab.clone(),
            train: encode_all(vocab, train),
            val: encode_all(vocab, val),
            meta,
            best: params.clone(),
            adam: AdamState::new(cfg.adam(), layout.len()),
            params,
            rng: rng::derived(cfg.seed, stream::BATCHES),
            epoch: 0,
            step: 0,
            bad_evals: 0,
            history: TrainHistory::new(),
        })
    }

    /// Rebuilds a paused session from its checkpoint and the same data.
    pub fn resume(cp: &Checkpoint, train: &Dataset, val: &Dataset, meta_test: Option<&Dataset>) -> Result<Self> {
        let state = cp
            .resume
            .as_ref()
            .ok_or_else(|| Error::Corrupt("checkpoint carries no resume state".into()))?;
        let mut s = Session::new(cp.method, train, val, meta_test, &cp.vocab, &cp.config)?;
        if state.train_len != s.train.len() || state.val_len != s.val.len() || state.meta_len != s.meta.len() {
            return Err(Error::Config("resume data does not match the checkpoint".into()));
        }
        s.params = state.params.clone();
        s.best = cp.params.clone();
        s.adam = cp.optimizer.clone();
        s.rng = state
            .rng
            .restore()
            .ok_or_else(|| Error::Corrupt("unreadable generator state".into()))?;
        s.epoch = state.epoch;
        s.step = state.step;
        s.bad_evals = state.bad_evals;
        s.history = cp.history.clone();
        Ok(s)
    }

    pub fn steps_per_epoch(&self) -> usize {
        let per_step = match self.method {
            Method::Suml => self.cfg.k * self.cfg.inner_batch_size,
            _ => self.cfg.train_batch_size,
        };
        self.train.len().div_ceil(per_step)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            kind: self.cfg.schedule,
            total_steps: self.cfg.max_epochs * self.steps_per_epoch(),
            warmup_proportion: self.cfg.warmup_proportion,
            base_lr: self.cfg.outer_lr,
        }
    }

    pub fn is_done(&self) -> bool {
        self.history.stop_reason.is_some()
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn history(&self) -> &TrainHistory {
        &self.history
    }

    /// Runs until the stopping rule fires, or for at most `epochs` more
    /// epochs when given.
    pub fn run(&mut self, epochs: Option<usize>) -> Result<()> {
        let mut left = epochs.unwrap_or(usize::MAX);
        while !self.is_done() && left > 0 {
            if self.epoch >= self.cfg.max_epochs {
                self.history.stop_reason = Some(StopReason::MaxEpochs);
                break;
            }
            self.run_epoch()?;
            left -= 1;
        }
        if !self.is_done() && self.epoch >= self.cfg.max_epochs {
            self.history.stop_reason = Some(StopReason::MaxEpochs);
        }
        Ok(())
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            step: self.step,
            last_finite: Box::new(self.checkpoint()),
        }
    }

    fn batch<'a>(data: &'a [EncodedInstance], size: usize, rng: &mut Rng) -> Vec<&'a EncodedInstance> {
        sample_indices(data.len(), size, rng)
            .into_iter()
            .map(|i| &data[i])
            .collect()
    }

    fn run_epoch(&mut self) -> Result<()> {
        let schedule = self.schedule();
        let mut sums = [0.0f64; 3];
        let spe = self.steps_per_epoch();
        for _ in 0..spe {
            let lr = schedule.lr_at(self.step);
            let (losses, grad) = self.compute_step()?;
            if !losses.iter().all(|l| l.is_finite()) || !grad.is_finite() {
                return Err(self.diverged());
            }
            for (s, l) in sums.iter_mut().zip(losses) {
                *s += l;
            }
            self.adam.step(&mut self.params.values, &grad.values, lr)?;
            self.step += 1;
        }
        self.epoch += 1;
        let mean = |s: f64| s / spe as f64;
        let record = self.evaluate_val(mean(sums[0]), mean(sums[1]), mean(sums[2]))?;
        if !record.val_loss.is_finite() {
            return Err(self.diverged());
        }
        self.observe(record);
        Ok(())
    }

    /// One optimizer step's gradient. Returns up to three running losses
    /// (primary, secondary, unused) and the gradient to apply.
    fn compute_step(&mut self) -> Result<([f64; 3], GradVector)> {
        match self.method {
            Method::Erm | Method::Contextless => {
                let b = Self::batch(&self.train, self.cfg.train_batch_size, &mut self.rng);
                let (loss, grad) = model::ce_loss_and_grad(&self.params, &b, self.method.eval_mode())?;
                Ok(([loss, 0.0, 0.0], grad))
            }
            Method::Adversarial => {
                let b = Self::batch(&self.train, self.cfg.train_batch_size, &mut self.rng);
                let a = model::adversarial_loss_and_grad(&self.params, &b, self.cfg.lambda_loss, self.cfg.lambda_enc)?;
                Ok(([a.scorer, a.adversary, 0.0], a.grad))
            }
            Method::Suml => {
                let step = self.suml_meta_step()?;
                let inner = step.inner_losses.iter().sum::<f64>() / step.inner_losses.len() as f64;
                let grad = GradVector {
                    layout: self.params.layout,
                    values: step.meta_grad,
                };
                Ok(([step.meta_loss, inner, 0.0], grad))
            }
        }
    }

    /// Samples the meta-test batch, then `k` training batches, and
    /// returns the first-order meta-gradient at the adapted parameters.
    pub fn suml_meta_step(&mut self) -> Result<MetaStep> {
        let layout = self.params.layout;
        let meta_batch = Self::batch(&self.meta, self.cfg.meta_test_batch_size, &mut self.rng);
        let train = &self.train;
        let bs = self.cfg.inner_batch_size;
        let rng = &mut self.rng;
        let as_params = |theta: &[f64]| ModelParams {
            layout,
            values: theta.to_vec(),
        };
        first_order_meta_gradient(
            &self.params.values,
            self.cfg.inner_lr,
            self.cfg.k,
            |_, theta| {
                let b = Self::batch(train, bs, rng);
                let (l, g) = model::ce_loss_and_grad(&as_params(theta), &b, EncodeMode::Full)?;
                Ok((l, g.values))
            },
            |theta| {
                let (l, g) = model::ce_loss_and_grad(&as_params(theta), &meta_batch, EncodeMode::Full)?;
                Ok((l, g.values))
            },
        )
    }

    fn evaluate_val(&self, train_loss: f64, secondary: f64, _unused: f64) -> Result<EvalRecord> {
        let mode = self.method.eval_mode();
        let val: Vec<&EncodedInstance> = self.val.iter().collect();
        let val_loss = model::ce_loss(&self.params, &val, mode)?;
        let correct = val.iter().filter(|i| model::predict(&self.params, i, mode) == i.label).count();
        let adversary = if self.method == Method::Adversarial {
            let adv_correct = val
                .iter()
                .filter(|i| model::adversary_predict(&self.params, i) == i.label)
                .count();
            Some(AdversaryRecord {
                train_scorer_loss: train_loss,
                train_adv_loss: secondary,
                val_adv_loss: model::adversary_loss(&self.params, &val)?,
                val_adv_accuracy: adv_correct as f64 / val.len() as f64,
            })
        } else {
            None
        };
        Ok(EvalRecord {
            epoch: self.epoch,
            step: self.step,
            train_loss,
            val_loss,
            val_accuracy: correct as f64 / val.len() as f64,
            inner_loss: (self.method == Method::Suml).then_some(secondary),
            adversary,
        })
    }

    fn observe(&mut self, record: EvalRecord) {
        let improved = self.history.best_val_loss.is_none_or(|b| record.val_loss < b);
        if improved {
            self.history.best_val_loss = Some(record.val_loss);
            self.history.best_step = Some(record.step);
            self.best = self.params.clone();
            self.bad_evals = 0;
        } else {
            self.bad_evals += 1;
        }
        self.history.records.push(record);
        let patience = self.cfg.early_stop_patience;
        if patience > 0 && self.bad_evals >= patience {
            self.history.stop_reason = Some(StopReason::EarlyStop);
        }
    }

    /// Snapshot: best parameters so far plus the full resume state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION.to_owned(),
            method: self.method,
            config: self.cfg.clone(),
            vocab: self.vocab.clone(),
            params: self.best.clone(),
            optimizer: self.adam.clone(),
            history: self.history.clone(),
            resume: Some(ResumeState {
                params: self.params.clone(),
                rng: RngState::capture(&self.rng),
                epoch: self.epoch,
                step: self.step,
                bad_evals: self.bad_evals,
                train_len: self.train.len(),
                val_len: self.val.len(),
                meta_len: self.meta.len(),
            }),
        }
    }

    pub fn finish(self) -> (Checkpoint, TrainHistory) {
        let cp = self.checkpoint();
        (cp, self.history)
    }
}

fn run_to_end(mut s: Session) -> Result<(Checkpoint, TrainHistory)> {
    s.run(None)?;
    Ok(s.finish())
}

/// Mini-batch Adam on the scorer loss with full inputs.
pub fn train_erm(train: &Dataset, val: &Dataset, vocab: &Vocab, cfg: &TrainConfig) -> Result<(Checkpoint, TrainHistory)> {
    run_to_end(Session::new(Method::Erm, train, val, None, vocab, cfg)?)
}

/// Scorer loss plus `lambda_loss` times the reversed adversary loss.
pub fn train_adversarial(
    train: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    run_to_end(Session::new(Method::Adversarial, train, val, None, vocab, cfg)?)
}

/// Stochastic-update meta-learning: first-order meta-gradients from a
/// balanced meta-test set applied to the pre-adaptation parameters.
pub fn train_suml(
    train: &Dataset,
    meta_test: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, TrainHistory)> {
    run_to_end(Session::new(Method::Suml, train, val, Some(meta_test), vocab, cfg)?)
}

/// One contextless probe per seed. Each probe re-splits `train ∪ val`
/// 9:1 with its own seed before training.
pub fn train_contextless_probe(
    train: &Dataset,
    val: &Dataset,
    vocab: &Vocab,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<Checkpoint>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one probe seed is required".into()));
    }
    let pool = Dataset::concat(train.name.clone(), &[train, val]);
    let mut seen = HashSet::new();
    let pool = Dataset::new(
        pool.name.clone(),
        pool.instances.into_iter().filter(|i| seen.insert(i.id.clone())).collect(),
    );
    seeds
        .iter()
        .map(|&seed| {
            let (tr, va) = crate::data::train_val_split(&pool, crate::data::SplitSpec::nine_to_one(seed))?;
            let cfg = TrainConfig { seed, ..cfg.clone() };
            run_to_end(Session::new(Method::Contextless, &tr, &va, None, vocab, &cfg)?).map(|(cp, _)| cp)
        })
        .collect()
}
