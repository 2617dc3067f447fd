//! The bag-of-words multiple-choice scorer, its losses, and exact gradients.
//!
//! Every choice `j` of an instance is encoded as the mean embedding of its
//! tokens (optionally prefixed by the context tokens) and scored by a
//! one-hidden-layer ReLU network shared across choices:
//!
//! ```text
//! x_j     = mean(E[t] for t in tokens_j)          (zero vector if empty)
//! logit_j = w2 . relu(W1^T x_j + b1) + b2
//! ```
//!
//! The adversary head reads choice-only encodings `g_j` through a
//! gradient reversal layer and predicts the gold index with one linear
//! column per choice slot: `adv_j = A[:, j] . g_j + c_j`.
//!
//! # Flat layout
//!
//! All parameters live in one `Vec<f64>` of length
//! `P = V*d + d*h + h + h + 1 + d*M + M` (V vocab, d embedding dim,
//! h hidden units, M adversary slots), in this order:
//!
//! | block      | length | indexing                   |
//! |------------|--------|----------------------------|
//! | embedding  | V*d    | `token * d + i`            |
//! | w1         | d*h    | `i * h + k` (input i → unit k) |
//! | b1         | h      | `k`                        |
//! | w2         | h      | `k`                        |
//! | b2         | 1      |                            |
//! | adv_w      | d*M    | `i * M + j` (input i → slot j) |
//! | adv_b      | M      | `j`                        |

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Instance;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::text::{EncodedInstance, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub vocab_size: usize,
    pub dim: usize,
    pub hidden: usize,
    pub max_choices: usize,
}

impl Layout {
    pub fn new(vocab_size: usize, dim: usize, hidden: usize, max_choices: usize) -> Self {
        Layout {
            vocab_size,
            dim,
            hidden,
            max_choices,
        }
    }

    pub fn len(&self) -> usize {
        self.adv_b().end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn embedding(&self) -> Range<usize> {
        0..self.vocab_size * self.dim
    }

    pub fn w1(&self) -> Range<usize> {
        let s = self.embedding().end;
        s..s + self.dim * self.hidden
    }

    pub fn b1(&self) -> Range<usize> {
        let s = self.w1().end;
        s..s + self.hidden
    }

    pub fn w2(&self) -> Range<usize> {
        let s = self.b1().end;
        s..s + self.hidden
    }

    pub fn b2(&self) -> usize {
        self.w2().end
    }

    pub fn adv_w(&self) -> Range<usize> {
        let s = self.b2() + 1;
        s..s + self.dim * self.max_choices
    }

    pub fn adv_b(&self) -> Range<usize> {
        let s = self.adv_w().end;
        s..s + self.max_choices
    }

    /// Coordinates of the adversary head (weights and biases).
    pub fn adversary(&self) -> Range<usize> {
        self.adv_w().start..self.adv_b().end
    }

    /// Coordinates of the scorer network above the embedding table.
    pub fn scorer(&self) -> Range<usize> {
        self.w1().start..self.b2() + 1
    }

    fn row(&self, token: u32) -> Range<usize> {
        let s = token as usize * self.dim;
        s..s + self.dim
    }
}

/// Flat parameter vector with structured accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layout: Layout,
    pub values: Vec<f64>,
}

/// Gradient in the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(layout: Layout) -> Self {
        ModelParams {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Shape {
                expected: layout.len(),
                actual: values.len(),
            });
        }
        Ok(ModelParams { layout, values })
    }

    /// Gaussian initialization: unit-variance embeddings, fan-in scaled
    /// weights, zero biases.
    pub fn init(layout: Layout, rng: &mut Rng) -> Self {
        let mut p = ModelParams::zeros(layout);
        let mut fill = |range: Range<usize>, std: f64, values: &mut [f64]| {
            for v in &mut values[range] {
                let z: f64 = StandardNormal.sample(rng);
                *v = z * std;
            }
        };
        let d = layout.dim.max(1) as f64;
        let h = layout.hidden.max(1) as f64;
        fill(layout.embedding(), 1.0, &mut p.values);
        fill(layout.w1(), (2.0 / d).sqrt(), &mut p.values);
        fill(layout.w2(), (1.0 / h).sqrt(), &mut p.values);
        fill(layout.adv_w(), (1.0 / d).sqrt(), &mut p.values);
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn embedding_row(&self, token: u32) -> &[f64] {
        &self.values[self.layout.row(token)]
    }

    pub fn embedding_row_mut(&mut self, token: u32) -> &mut [f64] {
        let r = self.layout.row(token);
        &mut self.values[r]
    }

    pub fn w1(&self) -> &[f64] {
        &self.values[self.layout.w1()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.values[self.layout.b1()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.values[self.layout.w2()]
    }

    pub fn b2(&self) -> f64 {
        self.values[self.layout.b2()]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if vocab.len() != self.layout.vocab_size {
            return Err(Error::VocabMismatch(format!(
                "vocabulary has {} tokens but the embedding table has {} rows",
                vocab.len(),
                self.layout.vocab_size
            )));
        }
        Ok(())
    }
}

impl GradVector {
    pub fn zeros(layout: Layout) -> Self {
        GradVector {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodeMode {
    /// Context tokens followed by the choice tokens.
    Full,
    /// Choice tokens only.
    Contextless,
}

fn sequence(inst: &EncodedInstance, j: usize, mode: EncodeMode) -> impl Iterator<Item = u32> + '_ {
    let ctx: &[u32] = match mode {
        EncodeMode::Full => &inst.context,
        EncodeMode::Contextless => &[],
    };
    ctx.iter().chain(inst.choices[j].iter()).copied()
}

fn seq_len(inst: &EncodedInstance, j: usize, mode: EncodeMode) -> usize {
    let ctx = match mode {
        EncodeMode::Full => inst.context.len(),
        EncodeMode::Contextless => 0,
    };
    ctx + inst.choices[j].len()
}

fn mean_embedding(params: &ModelParams, inst: &EncodedInstance, j: usize, mode: EncodeMode, out: &mut [f64]) {
    out.fill(0.0);
    let n = seq_len(inst, j, mode);
    if n == 0 {
        return;
    }
    for t in sequence(inst, j, mode) {
        for (o, e) in out.iter_mut().zip(params.embedding_row(t)) {
            *o += e;
        }
    }
    let inv = 1.0 / n as f64;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

/// Mean embedding of choice `j` under `mode`.
pub fn encode_choice(
    params: &ModelParams,
    vocab: &Vocab,
    instance: &Instance,
    choice_index: usize,
    mode: EncodeMode,
) -> Result<Vec<f64>> {
    if choice_index >= instance.num_choices() {
        return Err(Error::ChoiceIndex {
            index: choice_index,
            choices: instance.num_choices(),
        });
    }
    let enc = vocab.encode(instance);
    let mut out = vec![0.0; params.layout.dim];
    mean_embedding(params, &enc, choice_index, mode, &mut out);
    Ok(out)
}

/// Per-choice activations kept for the backward pass.
struct ChoiceTrace {
    x: Vec<f64>,
    z: Vec<f64>,
    /// Score without the output bias.
    score: f64,
}

fn forward_choice(params: &ModelParams, inst: &EncodedInstance, j: usize, mode: EncodeMode) -> ChoiceTrace {
    let l = params.layout;
    let mut x = vec![0.0; l.dim];
    mean_embedding(params, inst, j, mode, &mut x);
    let w1 = params.w1();
    let mut z = params.b1().to_vec();
    for (i, xi) in x.iter().enumerate() {
        if *xi == 0.0 {
            continue;
        }
        let row = &w1[i * l.hidden..(i + 1) * l.hidden];
        for (zk, w) in z.iter_mut().zip(row) {
            *zk += xi * w;
        }
    }
    let score = z
        .iter()
        .zip(params.w2())
        .map(|(zk, w)| zk.max(0.0) * w)
        .sum();
    ChoiceTrace { x, z, score }
}

/// Logits of every choice of an encoded instance.
pub fn logits(params: &ModelParams, inst: &EncodedInstance, mode: EncodeMode) -> Vec<f64> {
    let b2 = params.b2();
    (0..inst.choices.len())
        .map(|j| forward_choice(params, inst, j, mode).score + b2)
        .collect()
}

pub fn score_choices(params: &ModelParams, vocab: &Vocab, instance: &Instance, mode: EncodeMode) -> Vec<f64> {
    logits(params, &vocab.encode(instance), mode)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

pub fn predict(params: &ModelParams, inst: &EncodedInstance, mode: EncodeMode) -> usize {
    argmax(&logits(params, inst, mode))
}

/// Returns (-log softmax(scores)[label], softmax(scores)).
fn cross_entropy(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (scores[label] - max);
    (loss, exps.into_iter().map(|e| e / sum).collect())
}

fn check_batch(batch: &[&EncodedInstance]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for inst in batch {
        if inst.label >= inst.choices.len() {
            return Err(Error::ChoiceIndex {
                index: inst.label,
                choices: inst.choices.len(),
            });
        }
    }
    Ok(())
}

/// Mean cross-entropy of the scorer over a batch, without gradients.
///
/// The output bias shifts every logit equally and cancels in the softmax,
/// so it is left out of the computation and its gradient is exactly zero.
pub fn ce_loss(params: &ModelParams, batch: &[&EncodedInstance], mode: EncodeMode) -> Result<f64> {
    check_batch(batch)?;
    let mut total = 0.0;
    for inst in batch {
        let scores: Vec<f64> = (0..inst.choices.len())
            .map(|j| forward_choice(params, inst, j, mode).score)
            .collect();
        total += cross_entropy(&scores, inst.label).0;
    }
    Ok(total / batch.len() as f64)
}

/// Mean cross-entropy and its exact gradient.
pub fn ce_loss_and_grad(
    params: &ModelParams,
    batch: &[&EncodedInstance],
    mode: EncodeMode,
) -> Result<(f64, GradVector)> {
    check_batch(batch)?;
    let mut grad = GradVector::zeros(params.layout);
    let loss = accumulate_scorer(params, batch, mode, &mut grad);
    Ok((loss, grad))
}

fn accumulate_scorer(params: &ModelParams, batch: &[&EncodedInstance], mode: EncodeMode, grad: &mut GradVector) -> f64 {
    let l = params.layout;
    let (h, d) = (l.hidden, l.dim);
    let inv_b = 1.0 / batch.len() as f64;
    let (w1r, b1r, w2r) = (l.w1(), l.b1(), l.w2());
    let w1 = params.w1();
    let w2 = params.w2();
    let mut total = 0.0;
    let mut c = vec![0.0; h];
    for inst in batch {
        let m = inst.choices.len();
        let traces: Vec<ChoiceTrace> = (0..m).map(|j| forward_choice(params, inst, j, mode)).collect();
        let scores: Vec<f64> = traces.iter().map(|t| t.score).collect();
        let (loss, probs) = cross_entropy(&scores, inst.label);
        total += loss;

        // dz[j * h + k]: gradient at the pre-activation of unit k for choice j
        let mut dz = vec![0.0; m * h];
        let mut n_active = vec![0usize; h];
        for (j, tr) in traces.iter().enumerate() {
            let ds = (probs[j] - if j == inst.label { 1.0 } else { 0.0 }) * inv_b;
            for k in 0..h {
                if tr.z[k] > 0.0 {
                    grad.values[w2r.start + k] += ds * tr.z[k];
                    dz[j * h + k] = ds * w2[k];
                    n_active[k] += 1;
                }
            }
            for i in 0..d {
                if tr.x[i] == 0.0 {
                    continue;
                }
                let row = w1r.start + i * h;
                for k in 0..h {
                    grad.values[row + k] += tr.x[i] * dz[j * h + k];
                }
            }
        }

        // A unit active on every choice shifts all scores by the same amount
        // for any input feature that is also shared by every choice. Those
        // contributions are exactly zero; summing them would leave only
        // rounding residue.
        let uniform: Vec<bool> = n_active.iter().map(|&a| a == m).collect();
        for k in 0..h {
            if !uniform[k] {
                grad.values[b1r.start + k] += (0..m).map(|j| dz[j * h + k]).sum::<f64>();
            }
        }
        for (t, weights) in token_weights(inst, mode) {
            let shared = weights.iter().all(|w| *w == weights[0]);
            for k in 0..h {
                c[k] = if shared && uniform[k] {
                    0.0
                } else {
                    weights.iter().enumerate().map(|(j, w)| w * dz[j * h + k]).sum()
                };
            }
            let row = t as usize * d;
            for i in 0..d {
                let wrow = &w1[i * h..(i + 1) * h];
                grad.values[row + i] += wrow.iter().zip(&c).map(|(w, ck)| w * ck).sum::<f64>();
            }
        }
    }
    total * inv_b
}

/// For every distinct token of an instance, its weight `count_j / len_j`
/// in each choice's mean embedding. Ordered by token id.
fn token_weights(inst: &EncodedInstance, mode: EncodeMode) -> Vec<(u32, Vec<f64>)> {
    let m = inst.choices.len();
    let mut counts: std::collections::BTreeMap<u32, Vec<usize>> = std::collections::BTreeMap::new();
    for j in 0..m {
        for t in sequence(inst, j, mode) {
            counts.entry(t).or_insert_with(|| vec![0; m])[j] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(t, cnt)| {
            let w = cnt
                .iter()
                .enumerate()
                .map(|(j, &c)| if c == 0 { 0.0 } else { c as f64 / seq_len(inst, j, mode) as f64 })
                .collect();
            (t, w)
        })
        .collect()
}

/// Spreads the gradient of a mean embedding back onto its token rows.
fn scatter_embedding(grad: &mut GradVector, inst: &EncodedInstance, j: usize, mode: EncodeMode, dx: &[f64]) {
    let n = seq_len(inst, j, mode);
    if n == 0 {
        return;
    }
    let inv = 1.0 / n as f64;
    let d = grad.layout.dim;
    for t in sequence(inst, j, mode) {
        let s = t as usize * d;
        for (g, v) in grad.values[s..s + d].iter_mut().zip(dx) {
            *g += v * inv;
        }
    }
}

/// Backward pass of the gradient reversal layer. The forward pass is the
/// identity.
pub fn grl_backward(upstream: &[f64], lambda_enc: f64) -> Vec<f64> {
    upstream.iter().map(|g| -lambda_enc * g).collect()
}

fn check_adversary(params: &ModelParams, batch: &[&EncodedInstance]) -> Result<()> {
    for (n, inst) in batch.iter().enumerate() {
        if inst.choices.len() > params.layout.max_choices {
            return Err(Error::TooManyChoices {
                id: format!("batch[{n}]"),
                choices: inst.choices.len(),
                max: params.layout.max_choices,
            });
        }
    }
    Ok(())
}

fn adversary_logits(params: &ModelParams, inst: &EncodedInstance, encodings: &[Vec<f64>]) -> Vec<f64> {
    let l = params.layout;
    let aw = &params.values[l.adv_w()];
    let ab = &params.values[l.adv_b()];
    encodings
        .iter()
        .enumerate()
        .take(inst.choices.len())
        .map(|(j, g)| {
            ab[j]
                + g.iter()
                    .enumerate()
                    .map(|(i, gi)| gi * aw[i * l.max_choices + j])
                    .sum::<f64>()
        })
        .collect()
}

fn choice_only_encodings(params: &ModelParams, inst: &EncodedInstance) -> Vec<Vec<f64>> {
    (0..inst.choices.len())
        .map(|j| {
            let mut g = vec![0.0; params.layout.dim];
            mean_embedding(params, inst, j, EncodeMode::Contextless, &mut g);
            g
        })
        .collect()
}

/// Adversary prediction from choice-only encodings.
pub fn adversary_predict(params: &ModelParams, inst: &EncodedInstance) -> usize {
    let g = choice_only_encodings(params, inst);
    argmax(&adversary_logits(params, inst, &g))
}

/// Mean cross-entropy of the adversary head, without gradients.
pub fn adversary_loss(params: &ModelParams, batch: &[&EncodedInstance]) -> Result<f64> {
    check_batch(batch)?;
    check_adversary(params, batch)?;
    let total: f64 = batch
        .iter()
        .map(|inst| {
            let g = choice_only_encodings(params, inst);
            cross_entropy(&adversary_logits(params, inst, &g), inst.label).0
        })
        .sum();
    Ok(total / batch.len() as f64)
}

#[derive(Debug, Clone)]
pub struct AdversarialLoss {
    /// `scorer + lambda_loss * adversary`.
    pub total: f64,
    pub scorer: f64,
    pub adversary: f64,
    pub grad: GradVector,
}

/// Scorer loss plus the weighted adversary loss.
///
/// The adversary head receives the plain gradient of `lambda_loss * L_adv`;
/// the embedding table receives that gradient after the reversal layer,
/// i.e. multiplied by `-lambda_enc`.
pub fn adversarial_loss_and_grad(
    params: &ModelParams,
    batch: &[&EncodedInstance],
    lambda_loss: f64,
    lambda_enc: f64,
) -> Result<AdversarialLoss> {
    check_batch(batch)?;
    check_adversary(params, batch)?;
    let mut grad = GradVector::zeros(params.layout);
    let scorer = accumulate_scorer(params, batch, EncodeMode::Full, &mut grad);

    let l = params.layout;
    let m_max = l.max_choices;
    let inv_b = 1.0 / batch.len() as f64;
    let (awr, abr) = (l.adv_w(), l.adv_b());
    let mut adv_total = 0.0;
    let mut dg = vec![0.0; l.dim];
    for inst in batch {
        let g = choice_only_encodings(params, inst);
        let logits = adversary_logits(params, inst, &g);
        let (loss, probs) = cross_entropy(&logits, inst.label);
        adv_total += loss;
        for (j, gj) in g.iter().enumerate() {
            let du = (probs[j] - if j == inst.label { 1.0 } else { 0.0 }) * inv_b * lambda_loss;
            grad.values[abr.start + j] += du;
            for i in 0..l.dim {
                grad.values[awr.start + i * m_max + j] += gj[i] * du;
                dg[i] = params.values[awr.start + i * m_max + j] * du;
            }
            let reversed = grl_backward(&dg, lambda_enc);
            scatter_embedding(&mut grad, inst, j, EncodeMode::Contextless, &reversed);
        }
    }
    let adversary = adv_total * inv_b;
    Ok(AdversarialLoss {
        total: scorer + lambda_loss * adversary,
        scorer,
        adversary,
        grad,
    })
}
