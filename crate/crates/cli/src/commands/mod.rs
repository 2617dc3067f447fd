pub mod analyze;
pub mod eval;
pub mod gen;
pub mod gradcheck;
pub mod split;
pub mod sweep;
pub mod train;

use std::path::Path;

use anyhow::Context;
use suml::data::{load_jsonl, Dataset};
use suml::train::TrainConfig;

use crate::config::{self, Failure, RunConfig};

pub(crate) fn dataset(path: &Path) -> Result<Dataset, Failure> {
    Ok(load_jsonl(path).with_context(|| format!("loading {}", path.display()))?)
}

/// Probe settings: the `probe` section of an optional config file, with
/// the adversary head sized for `dataset`.
pub(crate) fn probe_config(path: Option<&Path>, dataset: &Dataset) -> Result<(RunConfig, TrainConfig), Failure> {
    let file = match path {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let mut cfg = file.probe.clone().unwrap_or_default();
    cfg.max_choices = cfg.max_choices.max(dataset.max_choices());
    cfg.validate()?;
    Ok((file, cfg))
}
