use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde::Serialize;
use suml::data::{carve_meta_test, save_jsonl, train_val_split, Dataset, SplitSpec};
use suml::synth::tag_by_cue;
use suml::text::{build_vocab, Vocab};
use suml::train::{save_checkpoint, Method, Session, TrainHistory};

use super::dataset;
use crate::config::{self, pick_seed, Failure, RunConfig, TagSource, TrainSection, TrainerKind};
use crate::rundir::{write_json, RunDir};

pub(crate) struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub meta: Option<Dataset>,
    /// Set when the meta-test set was carved out of `train`.
    pub carved: bool,
    pub vocab: Vocab,
}

/// Loads and splits the data of a training section.
///
/// Without a validation file a tenth of `train` is held out. A carve then
/// draws the meta-test set from what is left and removes it from training,
/// for every trainer kind, so baselines can train on the same remainder.
pub(crate) fn prepare(s: &TrainSection) -> Result<Prepared, Failure> {
    let seed = s.training.seed;
    let full = dataset(&s.train)?;
    let (mut train, val) = match &s.val {
        Some(p) => (full.clone(), dataset(p)?),
        None => train_val_split(&full, SplitSpec::nine_to_one(seed))?,
    };
    let mut vocab_sources = vec![full];
    let (meta, carved) = match (&s.meta_test, &s.carve) {
        (Some(_), Some(_)) => return Err(Failure::usage(anyhow!("give either `meta_test` or `carve`, not both"))),
        (Some(p), None) => {
            let m = dataset(p)?;
            vocab_sources.push(m.clone());
            (Some(m), false)
        }
        (None, Some(c)) => {
            let pool = match c.tags {
                TagSource::Cue => tag_by_cue(&train),
                TagSource::Subset => train.clone(),
            };
            let (m, rest) = carve_meta_test(&pool, c.size, seed)?;
            train = rest;
            (Some(m), true)
        }
        (None, None) => (None, false),
    };
    if s.kind == TrainerKind::Suml && meta.is_none() {
        return Err(Failure::usage(anyhow!("kind `suml` needs `meta_test` or `carve`")));
    }
    let refs: Vec<&Dataset> = vocab_sources.iter().collect();
    let vocab = build_vocab(&refs, s.vocab_min_count)?;
    Ok(Prepared {
        train,
        val,
        meta,
        carved,
        vocab,
    })
}

pub(crate) fn method(kind: TrainerKind) -> Method {
    match kind {
        TrainerKind::Erm => Method::Erm,
        TrainerKind::Adversarial => Method::Adversarial,
        TrainerKind::Suml => Method::Suml,
    }
}

#[derive(Serialize)]
pub(crate) struct Outcome {
    pub best_step: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub best_val_accuracy: Option<f64>,
    pub epochs: usize,
}

/// Trains one section into `dir`: checkpoint, history and resolved config.
pub(crate) fn train_into(s: &TrainSection, dir: &Path) -> Result<Outcome, Failure> {
    s.training.validate()?;
    let p = prepare(s)?;
    let meta = if s.kind == TrainerKind::Suml { p.meta.as_ref() } else { None };
    let mut session = Session::new(method(s.kind), &p.train, &p.val, meta, &p.vocab, &s.training)?;
    if let Err(e) = session.run(None) {
        if let suml::Error::Diverged { last_finite, .. } = &e {
            save_checkpoint(last_finite, dir.join("diverged_checkpoint.json"))?;
        }
        return Err(e.into());
    }
    let (cp, history) = session.finish();
    save_checkpoint(&cp, dir.join("checkpoint.json"))?;
    write_json(&dir.join("history.json"), &history)?;
    if p.carved {
        save_jsonl(p.meta.as_ref().unwrap(), dir.join("meta_test.jsonl"))?;
    }
    write_json(
        &dir.join("config.json"),
        &RunConfig {
            train: Some(s.clone()),
            ..Default::default()
        },
    )?;
    Ok(outcome(&history))
}

fn outcome(h: &TrainHistory) -> Outcome {
    Outcome {
        best_step: h.best_step,
        best_val_loss: h.best_val_loss,
        best_val_accuracy: h.best_record().map(|r| r.val_accuracy),
        epochs: h.records.len(),
    }
}

pub fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = config::load(path)?;
    let mut section = file
        .train
        .clone()
        .ok_or_else(|| Failure::usage(anyhow!("{} has no `train` section", path.display())))?;
    section.training.seed = pick_seed(seed, file.seed, section.training.seed);
    let rd = RunDir::create(out.as_deref().or(file.out.as_deref()), section.training.seed)?;
    let o = train_into(&section, &rd.path)?;
    println!(
        "{:?}: {} epochs, best step {}, val loss {}, val accuracy {}",
        section.kind,
        o.epochs,
        o.best_step.map_or("-".into(), |s| s.to_string()),
        o.best_val_loss.map_or("-".into(), |v| format!("{v:.4}")),
        o.best_val_accuracy.map_or("-".into(), |v| format!("{v:.3}")),
    );
    println!("wrote {}", rd.path.display());
    Ok(())
}
