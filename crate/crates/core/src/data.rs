//! Canonical multiple-choice dataset format, splitting and sampling.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetTag {
    Easy,
    Hard,
    Unknown,
}

impl std::fmt::Display for SubsetTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SubsetTag::Easy => "easy",
            SubsetTag::Hard => "hard",
            SubsetTag::Unknown => "unknown",
        })
    }
}

/// Generator bookkeeping attached to synthetic instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CueMeta {
    pub token: String,
    pub cued: bool,
}

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    #[serde(default)]
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ask_kind: Option<String>,
    pub choices: Vec<String>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset_tag: Option<SubsetTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_meta: Option<CueMeta>,
}

impl Instance {
    pub fn new(
        id: impl Into<String>,
        context: impl Into<String>,
        choices: Vec<String>,
        label: usize,
    ) -> Self {
        Instance {
            id: id.into(),
            context: context.into(),
            ask_kind: None,
            choices,
            label,
            subset_tag: None,
            cue_meta: None,
        }
    }

    pub fn with_tag(mut self, tag: SubsetTag) -> Self {
        self.subset_tag = Some(tag);
        self
    }

    pub fn num_choices(&self) -> usize {
        self.choices.len()
    }

    /// Tag used for subset accounting; untagged counts as unknown.
    pub fn subset(&self) -> SubsetTag {
        self.subset_tag.unwrap_or(SubsetTag::Unknown)
    }
}

/// Whether every instance has the same number of choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceProfile {
    Empty,
    Constant(usize),
    Mixed { min: usize, max: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, instances: Vec<Instance>) -> Self {
        Dataset {
            name: name.into(),
            instances,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Instance> {
        self.instances.iter()
    }

    pub fn profile(&self) -> ChoiceProfile {
        let mut it = self.instances.iter().map(Instance::num_choices);
        let Some(first) = it.next() else {
            return ChoiceProfile::Empty;
        };
        let (min, max) = it.fold((first, first), |(lo, hi), m| (lo.min(m), hi.max(m)));
        if min == max {
            ChoiceProfile::Constant(min)
        } else {
            ChoiceProfile::Mixed { min, max }
        }
    }

    pub fn max_choices(&self) -> usize {
        self.instances
            .iter()
            .map(Instance::num_choices)
            .max()
            .unwrap_or(0)
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.instances.iter().map(|i| i.id.as_str()).collect()
    }

    /// Checks unique ids, at least two choices, and in-range labels.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut dup = Vec::new();
        let mut bad_label = Vec::new();
        let mut few = Vec::new();
        for inst in &self.instances {
            if !seen.insert(inst.id.as_str()) {
                dup.push(inst.id.clone());
            }
            if inst.choices.len() < 2 {
                few.push(inst.id.clone());
            }
            if inst.label >= inst.choices.len() {
                bad_label.push(inst.id.clone());
            }
        }
        let mut problems = Vec::new();
        if !bad_label.is_empty() {
            problems.push(format!("label out of range for ids [{}]", bad_label.join(", ")));
        }
        if !few.is_empty() {
            problems.push(format!("fewer than two choices for ids [{}]", few.join(", ")));
        }
        if !dup.is_empty() {
            problems.push(format!("duplicate ids [{}]", dup.join(", ")));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation {
                name: self.name.clone(),
                message: problems.join("; "),
            })
        }
    }

    /// Copy of this dataset without the given ids, order preserved.
    pub fn without_ids(&self, ids: &HashSet<&str>) -> Dataset {
        Dataset::new(
            self.name.clone(),
            self.instances
                .iter()
                .filter(|i| !ids.contains(i.id.as_str()))
                .cloned()
                .collect(),
        )
    }

    pub fn filter_tag(&self, tag: SubsetTag) -> Dataset {
        Dataset::new(
            format!("{}-{}", self.name, tag),
            self.instances
                .iter()
                .filter(|i| i.subset() == tag)
                .cloned()
                .collect(),
        )
    }

    pub fn concat(name: impl Into<String>, parts: &[&Dataset]) -> Dataset {
        Dataset::new(
            name,
            parts.iter().flat_map(|d| d.instances.iter().cloned()).collect(),
        )
    }
}

/// Reads one JSON object per line. Blank lines are skipped.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut instances = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: Instance = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: n + 1,
            message: e.to_string(),
        })?;
        instances.push(inst);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ds = Dataset::new(name, instances);
    ds.validate()?;
    Ok(ds)
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for inst in &dataset.instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn nine_to_one(seed: u64) -> Self {
        SplitSpec {
            val_fraction: 0.1,
            seed,
        }
    }
}

/// Random train/validation split. Both halves keep load order.
pub fn train_val_split(dataset: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.val_fraction > 0.0 && spec.val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction must lie in (0, 1), got {}",
            spec.val_fraction
        )));
    }
    let n = dataset.len();
    if n < 10 {
        return Err(Error::TooSmall { needed: 10, have: n });
    }
    let n_val = ((n as f64) * spec.val_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::derived(spec.seed, rng::stream::SPLIT);
    order.shuffle(&mut r);
    let mut in_val = vec![false; n];
    for &i in &order[..n_val] {
        in_val[i] = true;
    }
    let (mut train, mut val) = (Vec::with_capacity(n - n_val), Vec::with_capacity(n_val));
    for (inst, v) in dataset.instances.iter().zip(in_val) {
        if v {
            val.push(inst.clone());
        } else {
            train.push(inst.clone());
        }
    }
    Ok((
        Dataset::new(format!("{}-train", dataset.name), train),
        Dataset::new(format!("{}-val", dataset.name), val),
    ))
}

/// Balanced meta-test set: `n / 2` draws without replacement from each pool.
///
/// Output holds the hard draws first, then the easy ones, each tagged.
/// The caller removes the returned ids from its training pool (see
/// [`carve_meta_test`]).
pub fn build_meta_test(
    pool_easy: &Dataset,
    pool_hard: &Dataset,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n % 2 != 0 {
        return Err(Error::Config(format!("meta-test size must be even, got {n}")));
    }
    let half = n / 2;
    for (pool, name) in [(pool_hard, "hard"), (pool_easy, "easy")] {
        if pool.len() < half {
            return Err(Error::Shortfall {
                pool: name,
                requested: half,
                available: pool.len(),
            });
        }
    }
    let mut r = rng::derived(seed, rng::stream::META_TEST);
    let mut out = Vec::with_capacity(n);
    for (pool, tag) in [(pool_hard, SubsetTag::Hard), (pool_easy, SubsetTag::Easy)] {
        let mut picked = index::sample(&mut r, pool.len(), half).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool.instances[i].clone().with_tag(tag)));
    }
    Ok(Dataset::new("meta-test", out))
}

/// Splits a tagged training pool into (meta_test, residual_train).
///
/// Untagged instances stay in the residual pool.
pub fn carve_meta_test(pool: &Dataset, n: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let easy = pool.filter_tag(SubsetTag::Easy);
    let hard = pool.filter_tag(SubsetTag::Hard);
    let meta = build_meta_test(&easy, &hard, n, seed)?;
    let residual = pool.without_ids(&meta.ids());
    Ok((meta, residual))
}

/// Draws a batch of indices into `dataset`.
///
/// Within a batch, sampling is without replacement when `size` does not
/// exceed the dataset, otherwise with replacement. Successive calls are
/// independent draws.
pub fn sample_indices(len: usize, size: usize, rng: &mut Rng) -> Vec<usize> {
    if len == 0 || size == 0 {
        return Vec::new();
    }
    if size <= len {
        index::sample(rng, len, size).into_vec()
    } else {
        (0..size).map(|_| rng.random_range(0..len)).collect()
    }
}

pub fn sample_batch<'a>(dataset: &'a Dataset, size: usize, rng: &mut Rng) -> Vec<&'a Instance> {
    sample_indices(dataset.len(), size, rng)
        .into_iter()
        .map(|i| &dataset.instances[i])
        .collect()
}
