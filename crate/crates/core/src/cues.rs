//! Answer-side cue statistics and the easy/hard split.
//!
//! For an instance with choice token sets `T_0..T_{m-1}`, a token is
//! *applicable* when it belongs to exactly one of the sets, and
//! *productive* when that set is the gold choice. Applicability `α_k`
//! counts applicable instances, productivity `π_k` is the productive share
//! of them, and coverage is `α_k / n`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance, SubsetTag};
use crate::model::{self, EncodeMode};
use crate::text::tokenize;
use crate::train::Checkpoint;

/// Token set of every choice; contexts are ignored.
pub fn token_sets(instance: &Instance) -> Vec<BTreeSet<String>> {
    instance
        .choices
        .iter()
        .map(|c| tokenize(c).into_iter().collect())
        .collect()
}

/// Index of the only choice whose set holds `token`, if exactly one does.
fn sole_holder(sets: &[BTreeSet<String>], token: &str) -> Option<usize> {
    let mut holder = None;
    for (j, s) in sets.iter().enumerate() {
        if s.contains(token) {
            if holder.is_some() {
                return None;
            }
            holder = Some(j);
        }
    }
    holder
}

pub fn applicability(dataset: &Dataset, token: &str) -> usize {
    dataset
        .iter()
        .filter(|i| sole_holder(&token_sets(i), token).is_some())
        .count()
}

fn productive_count(dataset: &Dataset, token: &str) -> usize {
    dataset
        .iter()
        .filter(|i| sole_holder(&token_sets(i), token) == Some(i.label))
        .count()
}

/// `None` when the token is never applicable.
pub fn productivity(dataset: &Dataset, token: &str) -> Option<f64> {
    let a = applicability(dataset, token);
    (a > 0).then(|| productive_count(dataset, token) as f64 / a as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenStats {
    pub token: String,
    pub applicability: usize,
    pub productive_count: usize,
    pub productivity: Option<f64>,
    pub coverage: f64,
}

/// Statistics for every token that occurs in some choice, in one pass.
pub fn all_token_stats(dataset: &Dataset) -> Vec<TokenStats> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for inst in dataset.iter() {
        let sets = token_sets(inst);
        let mut holders: BTreeMap<&str, Option<usize>> = BTreeMap::new();
        for (j, s) in sets.iter().enumerate() {
            for t in s {
                holders
                    .entry(t.as_str())
                    .and_modify(|h| *h = None)
                    .or_insert(Some(j));
            }
        }
        for (t, h) in holders {
            let e = counts.entry(t.to_owned()).or_insert((0, 0));
            if let Some(j) = h {
                e.0 += 1;
                if j == inst.label {
                    e.1 += 1;
                }
            }
        }
    }
    let n = dataset.len();
    counts
        .into_iter()
        .map(|(token, (a, p))| TokenStats {
            token,
            applicability: a,
            productive_count: p,
            productivity: (a > 0).then(|| p as f64 / a as f64),
            coverage: if n == 0 { 0.0 } else { a as f64 / n as f64 },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueReport {
    pub dataset: String,
    pub n: usize,
    pub min_applicability: usize,
    pub tokens: Vec<TokenStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probe_accuracies: Vec<ProbeAccuracy>,
    /// Mean of `1/m` over instances.
    pub random_baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeAccuracy {
    pub seed: u64,
    pub accuracy: f64,
}

pub const DEFAULT_MIN_APPLICABILITY: usize = 5;

/// Most productive tokens with `α_k >= min_applicability`.
///
/// Ranked by productivity, then applicability (both descending), then
/// token text.
pub fn cue_report(
    dataset: &Dataset,
    top_k: usize,
    min_applicability: usize,
    probe_accuracies: Vec<ProbeAccuracy>,
) -> CueReport {
    let mut tokens: Vec<TokenStats> = all_token_stats(dataset)
        .into_iter()
        .filter(|s| s.applicability >= min_applicability.max(1))
        .collect();
    tokens.sort_by(|a, b| {
        b.productivity
            .unwrap_or(0.0)
            .total_cmp(&a.productivity.unwrap_or(0.0))
            .then(b.applicability.cmp(&a.applicability))
            .then(a.token.cmp(&b.token))
    });
    tokens.truncate(top_k);
    let random_baseline = if dataset.is_empty() {
        0.0
    } else {
        dataset.iter().map(|i| 1.0 / i.num_choices() as f64).sum::<f64>() / dataset.len() as f64
    };
    CueReport {
        dataset: dataset.name.clone(),
        n: dataset.len(),
        min_applicability,
        tokens,
        probe_accuracies,
        random_baseline,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    /// One entry per probe, in probe order.
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub dataset: String,
    pub probe_seeds: Vec<u64>,
    pub outcomes: Vec<InstanceOutcome>,
    pub easy: Vec<String>,
    pub hard: Vec<String>,
    pub n_easy: usize,
    pub n_hard: usize,
}

impl SplitReport {
    /// Builds the split from a correctness matrix (`correct[i][p]`).
    pub fn from_outcomes(dataset: &Dataset, probe_seeds: Vec<u64>, correct: Vec<Vec<bool>>) -> Self {
        let mut outcomes = Vec::with_capacity(dataset.len());
        let (mut easy, mut hard) = (Vec::new(), Vec::new());
        for (inst, row) in dataset.iter().zip(correct) {
            if !row.is_empty() && row.iter().all(|c| *c) {
                easy.push(inst.id.clone());
            } else {
                hard.push(inst.id.clone());
            }
            outcomes.push(InstanceOutcome {
                id: inst.id.clone(),
                correct: row,
            });
        }
        SplitReport {
            dataset: dataset.name.clone(),
            probe_seeds,
            n_easy: easy.len(),
            n_hard: hard.len(),
            outcomes,
            easy,
            hard,
        }
    }

    /// Copy of `dataset` with every instance tagged easy or hard.
    pub fn tag(&self, dataset: &Dataset) -> Dataset {
        let easy: BTreeSet<&str> = self.easy.iter().map(String::as_str).collect();
        let mut out = dataset.clone();
        for inst in &mut out.instances {
            inst.subset_tag = Some(if easy.contains(inst.id.as_str()) {
                SubsetTag::Easy
            } else {
                SubsetTag::Hard
            });
        }
        out
    }
}

/// Easy = solved by every contextless probe; hard = everything else.
pub fn split_easy_hard(dataset: &Dataset, probes: &[Checkpoint]) -> SplitReport {
    let encoded: Vec<Vec<_>> = probes.iter().map(|p| p.vocab.encode_dataset(dataset)).collect();
    let correct = (0..dataset.len())
        .map(|i| {
            probes
                .iter()
                .zip(&encoded)
                .map(|(p, enc)| model::predict(&p.params, &enc[i], EncodeMode::Contextless) == enc[i].label)
                .collect()
        })
        .collect();
    SplitReport::from_outcomes(dataset, probes.iter().map(|p| p.config.seed).collect(), correct)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn inst(id: &str, choices: &[&str], label: usize) -> Instance {
        Instance::new(id, "ctx", choices.iter().map(|s| s.to_string()).collect(), label)
    }

    fn hand() -> Dataset {
        Dataset::new(
            "hand",
            vec![
                inst("i1", &["a b", "c"], 0),
                inst("i2", &["c", "a d"], 1),
                inst("i3", &["e", "a"], 0),
            ],
        )
    }

    #[test]
    fn token_sets_use_set_semantics() {
        let s = token_sets(&inst("x", &["a b a", "b c"], 0));
        assert_eq!(s[0], BTreeSet::from(["a".into(), "b".into()]));
        assert_eq!(s[1], BTreeSet::from(["b".into(), "c".into()]));
        let same = token_sets(&inst("y", &["q r", "r q"], 0));
        assert_eq!(same[0], same[1]);
        assert!(token_sets(&inst("z", &["", "a"], 0))[0].is_empty());
    }

    #[test]
    fn hand_dataset_enumeration() {
        let ds = hand();
        assert_eq!(applicability(&ds, "a"), 3);
        assert_eq!(applicability(&ds, "c"), 2);
        assert_eq!(applicability(&ds, "zzz"), 0);
        assert_eq!(productivity(&ds, "a"), Some(2.0 / 3.0));
        assert_eq!(productivity(&ds, "c"), Some(0.0));
        assert_eq!(productivity(&ds, "zzz"), None);
    }

    #[test]
    fn one_pass_stats_agree_with_per_token_functions() {
        let ds = hand();
        for s in all_token_stats(&ds) {
            assert_eq!(s.applicability, applicability(&ds, &s.token));
            assert_eq!(s.productivity, productivity(&ds, &s.token));
            assert_eq!(s.coverage, s.applicability as f64 / 3.0);
        }
    }

    #[test]
    fn token_in_every_choice_is_never_applicable() {
        let ds = Dataset::new("u", vec![inst("1", &["the x", "the y"], 0), inst("2", &["the", "z the", "the"], 2)]);
        assert_eq!(applicability(&ds, "the"), 0);
    }

    #[test]
    fn report_ranking_and_filtering() {
        let ds = hand();
        let r = cue_report(&ds, 10, 1, vec![]);
        let order: Vec<_> = r.tokens.iter().map(|t| t.token.as_str()).collect();
        // b,d,e: π=1 α=1 (by token); a: 2/3; c: 0
        assert_eq!(order, ["b", "d", "e", "a", "c"]);
        assert_eq!(cue_report(&ds, 1, 1, vec![]).tokens.len(), 1);
        assert!(cue_report(&ds, 10, 5, vec![]).tokens.is_empty());
        assert_eq!(r.random_baseline, 0.5);
    }

    #[test]
    fn split_semantics() {
        let ds = hand();
        let all = SplitReport::from_outcomes(&ds, vec![1], vec![vec![true]; 3]);
        assert_eq!((all.n_easy, all.n_hard), (3, 0));
        let mixed = SplitReport::from_outcomes(
            &ds,
            vec![1, 2, 3],
            vec![vec![true, true, true], vec![true, false, true], vec![false, false, false]],
        );
        assert_eq!(mixed.easy, ["i1"]);
        assert_eq!(mixed.hard, ["i2", "i3"]);
        let tagged = mixed.tag(&ds);
        assert_eq!(tagged.filter_tag(SubsetTag::Easy).len(), 1);
        assert_eq!(tagged.filter_tag(SubsetTag::Hard).len(), 2);
    }
}
