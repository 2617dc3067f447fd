//! Run configuration files and the error-to-exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use suml::synth::GenConfig;
use suml::train::TrainConfig;

/// An error carrying the process exit code: 2 for usage and configuration
/// problems, 1 for everything else.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    pub fn usage(err: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, err: err.into() }
    }

    pub fn failed(err: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, err: err.into() }
    }

    pub fn code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.err)
    }
}

impl From<suml::Error> for Failure {
    fn from(e: suml::Error) -> Self {
        Failure {
            code: code_of(&e),
            err: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        // a library error under added context keeps its code
        let code = e.downcast_ref::<suml::Error>().map_or(1, code_of);
        Failure { code, err: e }
    }
}

fn code_of(e: &suml::Error) -> u8 {
    use suml::Error::*;
    match e {
        Config(_) | Overlap { .. } | UnknownFormat(_) | Shortfall { .. } | TooManyChoices { .. } => 2,
        _ => 1,
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::failed(e)
    }
}

/// One file for every command. Each command reads its own section and
/// ignores the rest; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides the seed of the command's section.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Parent directory of run directories.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSection>,
    /// Trainer settings of the contextless probes (analyze, split).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainerKind {
    Erm,
    Adversarial,
    Suml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagSource {
    /// Easy iff the generator planted the cue.
    Cue,
    /// The `subset_tag` already on each instance.
    Subset,
}

/// Balanced meta-test set drawn from the training data and removed from it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Carve {
    pub size: usize,
    pub tags: TagSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub kind: TrainerKind,
    pub train: PathBuf,
    /// Without one, a tenth of `train` is held out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carve: Option<Carve>,
    #[serde(default = "one")]
    pub vocab_min_count: usize,
    #[serde(default)]
    pub training: TrainConfig,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub base: TrainSection,
    /// Values per trainer field. Points are the cartesian product, with
    /// fields varied in key order and the last key fastest.
    pub grid: BTreeMap<String, Vec<serde_json::Value>>,
}

pub fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(Failure::usage)?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))
        .map_err(Failure::usage)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let base = absolute(base)?;
    if let Some(t) = cfg.train.as_mut() {
        t.resolve(&base)?;
    }
    if let Some(s) = cfg.sweep.as_mut() {
        s.base.resolve(&base)?;
    }
    if let Some(out) = cfg.out.take() {
        cfg.out = Some(absolute(&base.join(out))?);
    }
    Ok(cfg)
}

/// Absolute form of `p` with `.` and `..` folded away lexically.
pub fn absolute(p: &Path) -> Result<PathBuf, Failure> {
    use std::path::Component;
    let abs = std::path::absolute(p).map_err(Failure::failed)?;
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::ParentDir => {
                out.pop();
            }
            Component::CurDir => {}
            other => out.push(other),
        }
    }
    Ok(out)
}

impl TrainSection {
    /// Makes every path absolute, relative to the config file's directory.
    /// Existing files are resolved through links, so a snapshot names the
    /// data it actually read.
    fn resolve(&mut self, base: &Path) -> Result<(), Failure> {
        let fix = |p: &mut PathBuf| -> Result<(), Failure> {
            let joined = absolute(&base.join(&*p))?;
            *p = std::fs::canonicalize(&joined).unwrap_or(joined);
            Ok(())
        };
        fix(&mut self.train)?;
        if let Some(v) = self.val.as_mut() {
            fix(v)?;
        }
        if let Some(m) = self.meta_test.as_mut() {
            fix(m)?;
        }
        Ok(())
    }
}

/// The seed a command runs with: flag, then file, then section.
pub fn pick_seed(flag: Option<u64>, file: Option<u64>, section: u64) -> u64 {
    flag.or(file).unwrap_or(section)
}
