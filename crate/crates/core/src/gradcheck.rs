//! Central finite-difference verification of the analytic gradients.

mod reference;

use serde::{Deserialize, Serialize};

use reference::Part;

use crate::data::sample_indices;
use crate::error::Result;
use crate::model::{self, EncodeMode, GradVector, Layout, ModelParams};
use crate::synth::{generate_synthetic, GenConfig};
use crate::text::build_vocab;
use crate::rng::{self, stream};
use crate::text::EncodedInstance;

/// Loss whose gradient is being checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Scorer { mode: EncodeMode },
    Adversarial { lambda_loss: f64, lambda_enc: f64 },
}

impl Objective {
    pub fn name(&self) -> String {
        match self {
            Objective::Scorer { mode: EncodeMode::Full } => "erm".into(),
            Objective::Scorer {
                mode: EncodeMode::Contextless,
            } => "contextless".into(),
            Objective::Adversarial { .. } => "adversarial".into(),
        }
    }

    pub fn analytic(&self, params: &ModelParams, batch: &[&EncodedInstance]) -> Result<(f64, GradVector)> {
        match *self {
            Objective::Scorer { mode } => model::ce_loss_and_grad(params, batch, mode),
            Objective::Adversarial {
                lambda_loss,
                lambda_enc,
            } => model::adversarial_loss_and_grad(params, batch, lambda_loss, lambda_enc).map(|a| (a.total, a.grad)),
        }
    }
}

const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Check every coordinate up to this many parameters, sample above it.
    pub max_full: usize,
    pub sample: usize,
    pub seed: u64,
    /// Zero the analytic embedding gradient before comparing.
    pub inject_fault: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_full: 5000,
            sample: 500,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockError {
    pub block: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub objective: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates whose step was shrunk so it would not cross a ReLU kink.
    pub reduced_steps: usize,
    /// Coordinates left out because even the smallest step crossed a kink.
    pub skipped_kinks: usize,
    pub blocks: Vec<BlockError>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares the analytic gradient of `objective` with central differences.
///
/// For the adversarial objective the reversal layer has no finite
/// difference of its own: the numeric embedding gradient is
/// `d L_scorer + lambda_loss * (-lambda_enc) * d L_adv` and every other
/// coordinate uses `d L_scorer + lambda_loss * d L_adv`.
pub fn grad_check(
    params: &ModelParams,
    batch: &[&EncodedInstance],
    objective: Objective,
    opts: GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, mut analytic) = objective.analytic(params, batch)?;
    let layout = params.layout;
    if opts.inject_fault {
        analytic.values[layout.embedding()].fill(0.0);
    }

    let coords: Vec<usize> = if params.len() <= opts.max_full {
        (0..params.len()).collect()
    } else {
        let mut r = rng::derived(opts.seed, stream::GRADCHECK);
        let mut c = sample_indices(params.len(), opts.sample.max(200), &mut r);
        c.sort_unstable();
        c
    };

    let scorer_mode = match objective {
        Objective::Scorer { mode } => mode,
        Objective::Adversarial { .. } => EncodeMode::Full,
    };
    // Largest step in `step, step/10, ...` that keeps every ReLU on one side.
    let step_for = |c: usize| -> Option<f64> {
        let mut h = opts.step;
        while reference::crosses_kink(params, batch, scorer_mode, c, h) {
            h /= 10.0;
            if h < MIN_STEP {
                return None;
            }
        }
        Some(h)
    };
    let numeric_at = |c: usize, h: f64| -> f64 {
        let diff = match objective {
            Objective::Scorer { mode } => reference::loss_difference(params, batch, Part::Scorer(mode), c, h),
            Objective::Adversarial {
                lambda_loss,
                lambda_enc,
            } => {
                let reverse = if layout.embedding().contains(&c) { -lambda_enc } else { 1.0 };
                reference::loss_difference(params, batch, Part::Scorer(EncodeMode::Full), c, h)
                    + lambda_loss * reverse * reference::loss_difference(params, batch, Part::Adversary, c, h)
            }
        };
        diff / (2.0 * h)
    };

    let block_of = |c: usize| -> &'static str {
        if layout.embedding().contains(&c) {
            "embedding"
        } else if layout.adversary().contains(&c) {
            "adversary"
        } else {
            "scorer"
        }
    };
    let names = ["embedding", "scorer", "adversary"];
    let mut blocks: Vec<BlockError> = names
        .iter()
        .map(|b| BlockError {
            block: b.to_string(),
            max_rel_error: 0.0,
            checked: 0,
        })
        .collect();
    let mut worst = (0.0, 0);
    let (mut reduced, mut skipped) = (0, 0);
    for &c in &coords {
        let Some(h) = step_for(c) else {
            skipped += 1;
            continue;
        };
        if h < opts.step {
            reduced += 1;
        }
        let err = relative_error(analytic.values[c], numeric_at(c, h));
        if err > worst.0 {
            worst = (err, c);
        }
        let b = blocks.iter_mut().find(|b| b.block == block_of(c)).unwrap();
        b.checked += 1;
        b.max_rel_error = b.max_rel_error.max(err);
    }
    Ok(GradCheckReport {
        objective: objective.name(),
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: coords.len() - skipped,
        reduced_steps: reduced,
        skipped_kinks: skipped,
        blocks,
    })
}

/// The three objectives the self-check covers.
pub fn standard_objectives() -> [Objective; 3] {
    [
        Objective::Scorer { mode: EncodeMode::Full },
        Objective::Scorer {
            mode: EncodeMode::Contextless,
        },
        Objective::Adversarial {
            lambda_loss: 0.5,
            lambda_enc: 0.7,
        },
    ]
}

/// A small random model with a synthetic batch of six three-choice
/// instances.
pub fn random_case(seed: u64) -> Result<(ModelParams, Vec<EncodedInstance>)> {
    let cfg = GenConfig {
        n_train: 6,
        n_test_easy: 0,
        n_test_hard: 0,
        m: 3,
        n_keys: 4,
        n_fillers: 5,
        context_fillers: 1,
        choice_fillers: 1,
        cue_rate: 0.5,
        seed,
        ..GenConfig::default()
    };
    let data = generate_synthetic(&cfg)?.train;
    let vocab = build_vocab(&[&data], 1)?;
    let layout = Layout::new(vocab.len(), 4, 6, 3);
    let params = ModelParams::init(layout, &mut rng::derived(seed, stream::GRADCHECK));
    Ok((params, vocab.encode_dataset(&data)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Instance;
    use crate::text::Vocab;

    fn setup(seed: u64) -> (ModelParams, Vec<EncodedInstance>) {
        let v = Vocab::from_tokens(["a", "b", "c", "d", "e"]);
        let p = ModelParams::init(Layout::new(v.len(), 4, 5, 3), &mut rng::seeded(seed));
        let raw = [
            ("a b", vec!["c", "d e"], 0),
            ("c", vec!["a a", "b", "e"], 2),
            ("", vec!["d", "b c"], 1),
        ];
        let enc = raw
            .iter()
            .map(|(c, ch, y)| v.encode(&Instance::new("i", *c, ch.iter().map(|s| s.to_string()).collect(), *y)))
            .collect();
        (p, enc)
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        for seed in 0..4 {
            let (p, data) = setup(seed);
            let batch: Vec<&EncodedInstance> = data.iter().collect();
            for obj in [
                Objective::Scorer { mode: EncodeMode::Full },
                Objective::Scorer {
                    mode: EncodeMode::Contextless,
                },
                Objective::Adversarial {
                    lambda_loss: 0.6,
                    lambda_enc: 0.4,
                },
            ] {
                let r = grad_check(&p, &batch, obj, GradCheckOptions::default()).unwrap();
                assert!(r.max_rel_error <= 1e-6, "seed {seed} {obj:?}: {r:?}");
                assert_eq!(r.checked, p.len());
            }
        }
    }

    #[test]
    fn random_cases_pass_for_many_seeds() {
        for seed in 0..200 {
            let (p, data) = random_case(seed).unwrap();
            let batch: Vec<&EncodedInstance> = data.iter().collect();
            for obj in standard_objectives() {
                let r = grad_check(&p, &batch, obj, GradCheckOptions::default()).unwrap();
                assert!(r.max_rel_error <= 1e-6, "seed {seed} {obj:?}: {r:?}");
            }
        }
    }

    #[test]
    fn steps_shrink_near_relu_kinks() {
        // this case has a pre-activation about 5e-6 below zero
        let (p, data) = random_case(226).unwrap();
        let batch: Vec<&EncodedInstance> = data.iter().collect();
        let obj = Objective::Scorer {
            mode: EncodeMode::Contextless,
        };
        let r = grad_check(&p, &batch, obj, GradCheckOptions::default()).unwrap();
        assert!(r.reduced_steps >= 1, "{r:?}");
        assert_eq!(r.skipped_kinks, 0);
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn zeroed_embedding_gradient_is_detected() {
        let (p, data) = setup(11);
        let batch: Vec<&EncodedInstance> = data.iter().collect();
        let opts = GradCheckOptions {
            inject_fault: true,
            ..Default::default()
        };
        let r = grad_check(&p, &batch, Objective::Scorer { mode: EncodeMode::Full }, opts).unwrap();
        let emb = &r.blocks[0];
        assert_eq!(emb.block, "embedding");
        assert!((emb.max_rel_error - 1.0).abs() < 1e-9, "{r:?}");
        assert!(r.blocks[1].max_rel_error <= 1e-6);
    }

    #[test]
    fn unreachable_coordinates_stay_exact() {
        // Zero network: only tokens present in the batch can move the loss,
        // and with zero weights every gradient vanishes identically.
        let (p, data) = setup(0);
        let zero = ModelParams::zeros(p.layout);
        let batch: Vec<&EncodedInstance> = data.iter().collect();
        let r = grad_check(&zero, &batch, Objective::Scorer { mode: EncodeMode::Full }, GradCheckOptions::default())
            .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn large_models_are_sampled() {
        let v = Vocab::from_tokens((0..400).map(|i| format!("t{i}")));
        let p = ModelParams::init(Layout::new(v.len(), 16, 8, 2), &mut rng::seeded(1));
        let e = v.encode(&Instance::new("i", "t1 t2", vec!["t3".into(), "t4 t5".into()], 1));
        let r = grad_check(
            &p,
            &[&e],
            Objective::Scorer { mode: EncodeMode::Full },
            GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.checked, 500);
        assert!(r.max_rel_error <= 1e-6);
    }
}
