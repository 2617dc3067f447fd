//! Synthetic multiple-choice benchmark with a planted answer-side cue.
//!
//! Each context carries one key token `k<i>`. The right answer is the
//! choice holding the paired answer token `a<pi(i)>` for a fixed random
//! bijection `pi`; the other choices hold answer tokens of other keys.
//! Every text is padded with filler tokens. With probability
//! `1 - rule_strength` an instance is unruled: no choice holds the paired
//! token and the label carries no context signal.
//!
//! On top of this, a cue token is appended to the correct choice of a
//! `cue_rate` fraction of training instances, of every easy test instance,
//! and of no hard test instance. The cue never lands on a wrong choice.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{CueMeta, Dataset, Instance, SubsetTag};
use crate::error::{Error, Result};
use crate::rng::{self, stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_train: usize,
    pub n_test_easy: usize,
    pub n_test_hard: usize,
    /// Choices per instance.
    pub m: usize,
    /// Number of key/answer token pairs.
    pub n_keys: usize,
    /// Size of the filler vocabulary.
    pub n_fillers: usize,
    pub context_fillers: usize,
    pub choice_fillers: usize,
    pub cue_token: String,
    pub cue_rate: f64,
    pub rule_strength: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_train: 2000,
            n_test_easy: 500,
            n_test_hard: 500,
            m: 2,
            n_keys: 24,
            n_fillers: 60,
            context_fillers: 2,
            choice_fillers: 2,
            cue_token: "zz_cue".into(),
            cue_rate: 0.9,
            rule_strength: 0.95,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.n_keys < self.m {
            return bad(format!("n_keys ({}) must be at least m ({})", self.n_keys, self.m));
        }
        if !(0.0..=1.0).contains(&self.cue_rate) {
            return bad(format!("cue_rate must lie in [0, 1], got {}", self.cue_rate));
        }
        if !(self.rule_strength > 0.0 && self.rule_strength <= 1.0) {
            return bad(format!("rule_strength must lie in (0, 1], got {}", self.rule_strength));
        }
        if self.n_fillers == 0 && (self.context_fillers > 0 || self.choice_fillers > 0) {
            return bad("fillers requested but n_fillers is 0".into());
        }
        if self.cue_token.is_empty() || crate::text::tokenize(&self.cue_token) != [self.cue_token.to_lowercase()] {
            return bad(format!("cue_token `{}` must be a single token", self.cue_token));
        }
        Ok(())
    }

    pub fn key_token(i: usize) -> String {
        format!("k{i}")
    }

    pub fn answer_token(i: usize) -> String {
        format!("a{i}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub train: Dataset,
    pub test_easy: Dataset,
    pub test_hard: Dataset,
    /// `pairing[key] = answer` index.
    pub pairing: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Cue {
    Rate(f64),
    Always,
    Never,
}

struct Gen<'a> {
    cfg: &'a GenConfig,
    pairing: Vec<usize>,
    rng: Rng,
}

impl Gen<'_> {
    fn fillers(&mut self, n: usize) -> Vec<String> {
        (0..n)
            .map(|_| format!("f{}", self.rng.random_range(0..self.cfg.n_fillers)))
            .collect()
    }

    fn instance(&mut self, id: String, cue: Cue) -> Instance {
        let cfg = self.cfg;
        let key = self.rng.random_range(0..cfg.n_keys);
        let label = self.rng.random_range(0..cfg.m);
        let ruled = self.rng.random::<f64>() < cfg.rule_strength;

        let mut context = vec![GenConfig::key_token(key)];
        context.extend(self.fillers(cfg.context_fillers));
        context.shuffle(&mut self.rng);

        // Answer tokens other than the paired one, one per choice slot that needs it.
        let paired = self.pairing[key];
        let needed = if ruled { cfg.m - 1 } else { cfg.m };
        let others: Vec<usize> = index::sample(&mut self.rng, cfg.n_keys - 1, needed)
            .into_iter()
            .map(|i| if i >= paired { i + 1 } else { i })
            .collect();
        let mut others = others.into_iter();

        let mut choices = Vec::with_capacity(cfg.m);
        for j in 0..cfg.m {
            let answer = if ruled && j == label { paired } else { others.next().unwrap() };
            let mut toks = vec![GenConfig::answer_token(answer)];
            toks.extend(self.fillers(cfg.choice_fillers));
            toks.shuffle(&mut self.rng);
            choices.push(toks);
        }

        let cued = match cue {
            Cue::Rate(p) => self.rng.random::<f64>() < p,
            Cue::Always => true,
            Cue::Never => false,
        };
        if cued {
            choices[label].push(cfg.cue_token.clone());
        }

        let mut inst = Instance::new(
            id,
            context.join(" "),
            choices.into_iter().map(|c| c.join(" ")).collect(),
            label,
        );
        inst.cue_meta = Some(CueMeta {
            token: cfg.cue_token.clone(),
            cued,
        });
        inst
    }

    fn dataset(&mut self, name: &str, n: usize, cue: Cue, tag: Option<SubsetTag>) -> Dataset {
        let instances = (0..n)
            .map(|i| {
                let mut inst = self.instance(format!("{name}-{i:06}"), cue);
                inst.subset_tag = tag;
                inst
            })
            .collect();
        Dataset::new(name, instances)
    }
}

/// Generates (train, test_easy, test_hard). Pure function of `cfg`.
pub fn generate_synthetic(cfg: &GenConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = rng::derived(cfg.seed, stream::GENERATOR);
    let mut pairing: Vec<usize> = (0..cfg.n_keys).collect();
    pairing.shuffle(&mut rng);
    let mut g = Gen { cfg, pairing, rng };
    let train = g.dataset("train", cfg.n_train, Cue::Rate(cfg.cue_rate), None);
    let test_easy = g.dataset("test_easy", cfg.n_test_easy, Cue::Always, Some(SubsetTag::Easy));
    let test_hard = g.dataset("test_hard", cfg.n_test_hard, Cue::Never, Some(SubsetTag::Hard));
    Ok(Synthetic {
        train,
        test_easy,
        test_hard,
        pairing: g.pairing,
    })
}

/// Fraction of instances whose generator record says the cue was planted.
pub fn cued_fraction(ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let cued = ds
        .iter()
        .filter(|i| i.cue_meta.as_ref().is_some_and(|c| c.cued))
        .count();
    cued as f64 / ds.len() as f64
}

/// Tags every instance easy/hard from its generator record.
pub fn tag_by_cue(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for inst in &mut out.instances {
        let cued = inst.cue_meta.as_ref().is_some_and(|c| c.cued);
        inst.subset_tag = Some(if cued { SubsetTag::Easy } else { SubsetTag::Hard });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::tokenize;

    fn small(p: f64, rule: f64, m: usize) -> GenConfig {
        GenConfig {
            n_train: 600,
            n_test_easy: 200,
            n_test_hard: 200,
            m,
            cue_rate: p,
            rule_strength: rule,
            seed: 17,
            ..Default::default()
        }
    }

    fn has(text: &str, tok: &str) -> bool {
        tokenize(text).iter().any(|t| t == tok)
    }

    /// Picks the choice containing the cue, else choice 0.
    fn cue_rule(inst: &Instance, cue: &str) -> usize {
        inst.choices.iter().position(|c| has(c, cue)).unwrap_or(0)
    }

    /// Picks the choice containing the answer paired with the context key.
    fn pairing_oracle(inst: &Instance, pairing: &[usize]) -> Option<usize> {
        let key = tokenize(&inst.context).into_iter().find(|t| t.starts_with('k'))?;
        let k: usize = key[1..].parse().ok()?;
        let want = GenConfig::answer_token(pairing[k]);
        inst.choices.iter().position(|c| has(c, &want))
    }

    fn accuracy(ds: &Dataset, f: impl Fn(&Instance) -> usize) -> f64 {
        ds.iter().filter(|i| f(i) == i.label).count() as f64 / ds.len() as f64
    }

    #[test]
    fn sizes_and_determinism() {
        let cfg = small(0.5, 0.9, 3);
        let a = generate_synthetic(&cfg).unwrap();
        assert_eq!((a.train.len(), a.test_easy.len(), a.test_hard.len()), (600, 200, 200));
        assert_eq!(a, generate_synthetic(&cfg).unwrap());
        let other = generate_synthetic(&GenConfig { seed: 18, ..cfg }).unwrap();
        assert_ne!(a.train, other.train);
        for ds in [&a.train, &a.test_easy, &a.test_hard] {
            ds.validate().unwrap();
        }
    }

    #[test]
    fn fully_cued_data_is_solved_by_the_cue_on_easy_only() {
        let cfg = small(1.0, 1.0, 2);
        let s = generate_synthetic(&cfg).unwrap();
        for inst in s.train.iter() {
            assert!(has(&inst.choices[inst.label], &cfg.cue_token));
        }
        let cue = |i: &Instance| cue_rule(i, &cfg.cue_token);
        assert_eq!(accuracy(&s.test_easy, cue), 1.0);
        // Without the cue the rule always picks choice 0: chance on balanced labels.
        let hard = accuracy(&s.test_hard, cue);
        assert!((hard - 0.5).abs() < 0.08, "{hard}");
    }

    #[test]
    fn no_cue_when_rate_is_zero() {
        let cfg = small(0.0, 0.9, 2);
        let s = generate_synthetic(&cfg).unwrap();
        assert!(s.train.iter().all(|i| i.choices.iter().all(|c| !has(c, &cfg.cue_token))));
        assert_eq!(cued_fraction(&s.train), 0.0);
    }

    #[test]
    fn pairing_oracle_is_perfect_with_full_rule_strength() {
        for p in [0.0, 0.4, 1.0] {
            let s = generate_synthetic(&small(p, 1.0, 3)).unwrap();
            for ds in [&s.test_easy, &s.test_hard, &s.train] {
                assert_eq!(accuracy(ds, |i| pairing_oracle(i, &s.pairing).unwrap()), 1.0);
            }
        }
    }

    #[test]
    fn unruled_instances_never_hold_the_paired_answer() {
        let s = generate_synthetic(&small(0.5, 0.7, 3)).unwrap();
        let missing = s.train.iter().filter(|i| pairing_oracle(i, &s.pairing).is_none()).count();
        let frac = missing as f64 / s.train.len() as f64;
        assert!((frac - 0.3).abs() < 0.06, "{frac}");
        for inst in s.train.iter() {
            if let Some(j) = pairing_oracle(inst, &s.pairing) {
                assert_eq!(j, inst.label);
            }
        }
    }

    #[test]
    fn cue_never_on_a_wrong_choice_and_labels_balanced() {
        let cfg = GenConfig { n_train: 3000, ..small(0.9, 0.95, 3) };
        let s = generate_synthetic(&cfg).unwrap();
        let mut counts = [0usize; 3];
        for inst in s.train.iter().chain(s.test_easy.iter()).chain(s.test_hard.iter()) {
            counts[inst.label] += 1;
            for (j, c) in inst.choices.iter().enumerate() {
                if j != inst.label {
                    assert!(!has(c, &cfg.cue_token));
                }
            }
        }
        let n: usize = counts.iter().sum();
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 1.0 / 3.0).abs() < 0.03, "{counts:?}");
        }
        assert!(s.test_hard.iter().all(|i| i.choices.iter().all(|c| !has(c, &cfg.cue_token))));
    }

    #[test]
    fn cued_fraction_concentrates() {
        let s = generate_synthetic(&GenConfig { n_train: 2000, cue_rate: 0.9, ..small(0.9, 0.95, 2) }).unwrap();
        let f = cued_fraction(&s.train);
        assert!((f - 0.9).abs() <= 0.02, "{f}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            GenConfig { m: 1, ..Default::default() },
            GenConfig { cue_rate: 1.5, ..Default::default() },
            GenConfig { rule_strength: 0.0, ..Default::default() },
            GenConfig { cue_token: "two words".into(), ..Default::default() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
