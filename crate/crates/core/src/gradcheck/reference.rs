//! Independent loss evaluation for the numeric side of the check.
//!
//! Scores at `theta_c + h` and `theta_c - h` are computed in double-double
//! arithmetic, so their difference is accurate far below one f64 ulp of
//! the scores. The loss difference is then formed from those score
//! differences with `expm1`/`ln_1p`, never by subtracting two rounded
//! losses. Rounding therefore stays proportional to the size of the
//! difference itself and the central difference is limited only by its
//! truncation error.

use twofloat::TwoFloat;

use crate::model::{EncodeMode, ModelParams};
use crate::text::EncodedInstance;

type Dd = TwoFloat;

fn dd(x: f64) -> Dd {
    Dd::from(x)
}

/// Parameter vector with one coordinate shifted by an exact `delta`.
struct Shifted<'a> {
    values: &'a [f64],
    coord: usize,
    delta: Dd,
}

impl Shifted<'_> {
    fn get(&self, i: usize) -> Dd {
        if i == self.coord {
            dd(self.values[i]) + self.delta
        } else {
            dd(self.values[i])
        }
    }
}

fn tokens(inst: &EncodedInstance, j: usize, mode: EncodeMode) -> Vec<u32> {
    let mut t = match mode {
        EncodeMode::Full => inst.context.clone(),
        EncodeMode::Contextless => Vec::new(),
    };
    t.extend_from_slice(&inst.choices[j]);
    t
}

fn mean_embedding(p: &Shifted, dim: usize, toks: &[u32]) -> Vec<Dd> {
    let mut x = vec![dd(0.0); dim];
    if toks.is_empty() {
        return x;
    }
    for &t in toks {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += p.get(t as usize * dim + i);
        }
    }
    let n = dd(toks.len() as f64);
    x.into_iter().map(|v| v / n).collect()
}

fn scores(params: &ModelParams, p: &Shifted, inst: &EncodedInstance, mode: EncodeMode) -> Vec<Dd> {
    scores_with_pattern(params, p, inst, mode, &mut Vec::new())
}

/// Scores, appending the ReLU activity of every unit to `pattern`.
fn scores_with_pattern(
    params: &ModelParams,
    p: &Shifted,
    inst: &EncodedInstance,
    mode: EncodeMode,
    pattern: &mut Vec<bool>,
) -> Vec<Dd> {
    let l = params.layout;
    (0..inst.choices.len())
        .map(|j| {
            let x = mean_embedding(p, l.dim, &tokens(inst, j, mode));
            let mut s = p.get(l.b2());
            for k in 0..l.hidden {
                let mut z = p.get(l.b1().start + k);
                for (i, xi) in x.iter().enumerate() {
                    z += *xi * p.get(l.w1().start + i * l.hidden + k);
                }
                let on = z > dd(0.0);
                pattern.push(on);
                if on {
                    s += z * p.get(l.w2().start + k);
                }
            }
            s
        })
        .collect()
}

fn adversary_logits(params: &ModelParams, p: &Shifted, inst: &EncodedInstance) -> Vec<Dd> {
    let l = params.layout;
    (0..inst.choices.len())
        .map(|j| {
            let g = mean_embedding(p, l.dim, &inst.choices[j]);
            let mut a = p.get(l.adv_b().start + j);
            for (i, gi) in g.iter().enumerate() {
                a += *gi * p.get(l.adv_w().start + i * l.max_choices + j);
            }
            a
        })
        .collect()
}

/// `CE(up) - CE(down)` for one instance.
fn ce_difference(up: &[Dd], down: &[Dd], label: usize) -> f64 {
    // Score differences relative to the gold choice, so a shift shared by
    // every choice cancels exactly.
    let gold = up[label] - down[label];
    let rel: Vec<f64> = up.iter().zip(down).map(|(u, d)| f64::from((*u - *d) - gold)).collect();
    let base: Vec<f64> = down.iter().map(|d| f64::from(*d)).collect();
    let max = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = base.iter().map(|b| (b - max).exp()).collect();
    let z: f64 = w.iter().sum();
    // = ln(sum_j p_j exp(rel_j)) with p = softmax(down)
    let s: f64 = w.iter().zip(&rel).map(|(wj, rj)| wj / z * rj.exp_m1()).sum();
    s.ln_1p()
}

/// Which loss a reference difference is taken of.
#[derive(Clone, Copy)]
pub(super) enum Part {
    Scorer(EncodeMode),
    Adversary,
}

/// `L(theta + h e_c) - L(theta - h e_c)` for the batch-mean loss `part`.
pub(super) fn loss_difference(params: &ModelParams, batch: &[&EncodedInstance], part: Part, coord: usize, h: f64) -> f64 {
    let up = Shifted {
        values: &params.values,
        coord,
        delta: dd(h),
    };
    let down = Shifted {
        values: &params.values,
        coord,
        delta: dd(-h),
    };
    let total: f64 = batch
        .iter()
        .map(|inst| match part {
            Part::Scorer(mode) => ce_difference(
                &scores(params, &up, inst, mode),
                &scores(params, &down, inst, mode),
                inst.label,
            ),
            Part::Adversary => ce_difference(
                &adversary_logits(params, &up, inst),
                &adversary_logits(params, &down, inst),
                inst.label,
            ),
        })
        .sum();
    total / batch.len() as f64
}

/// Whether moving coordinate `coord` by `h` either way flips any ReLU in the
/// batch. The loss is not differentiable across such a step.
pub(super) fn crosses_kink(params: &ModelParams, batch: &[&EncodedInstance], mode: EncodeMode, coord: usize, h: f64) -> bool {
    let pattern = |delta: f64| {
        let p = Shifted {
            values: &params.values,
            coord,
            delta: dd(delta),
        };
        let mut out = Vec::new();
        for inst in batch {
            scores_with_pattern(params, &p, inst, mode, &mut out);
        }
        out
    };
    pattern(h) != pattern(-h)
}
