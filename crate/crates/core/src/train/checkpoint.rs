use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Method, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::optim::AdamState;
use crate::rng::RngState;
use crate::text::Vocab;

pub const CHECKPOINT_VERSION: &str = "suml-ckpt-v1";

/// A trained (or paused) model. `params` always holds the
/// best-validation parameters; the live iterate sits in `resume`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: String,
    pub method: Method,
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub history: TrainHistory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<ResumeState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResumeState {
    pub params: ModelParams,
    pub rng: RngState,
    pub epoch: usize,
    pub step: usize,
    pub bad_evals: usize,
    pub train_len: usize,
    pub val_len: usize,
    pub meta_len: usize,
}

pub fn save_checkpoint(cp: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string(cp)?;
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("not JSON: {e}")))?;
    match value.get("version").and_then(|v| v.as_str()) {
        Some(CHECKPOINT_VERSION) => {}
        Some(other) => {
            return Err(Error::Version {
                found: other.to_owned(),
                expected: CHECKPOINT_VERSION.to_owned(),
            })
        }
        None => return Err(Error::Corrupt("missing version field".into())),
    }
    let cp: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    if cp.params.values.len() != cp.params.layout.len() {
        return Err(Error::Corrupt("parameter vector does not match its layout".into()));
    }
    cp.params.check_vocab(&cp.vocab)?;
    Ok(cp)
}
