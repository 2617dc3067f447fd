//! Run directories: `<out>/run-<timestamp>-<seed>` plus a `latest` link.
//!
//! Nothing written inside a run directory depends on the clock, so reruns
//! with the same inputs produce byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::Failure;

pub const DEFAULT_OUT: &str = "runs";

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(parent: Option<&Path>, seed: u64) -> Result<Self, Failure> {
        let parent = parent.unwrap_or(Path::new(DEFAULT_OUT));
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%3f");
        let mut name = format!("run-{stamp}-{seed}");
        let mut n = 1;
        while parent.join(&name).exists() {
            name = format!("run-{stamp}-{seed}.{n}");
            n += 1;
        }
        let path = parent.join(&name);
        fs::create_dir(&path).with_context(|| format!("creating {}", path.display()))?;
        link_latest(parent, &name);
        Ok(RunDir { path })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Failure> {
        write_json(&self.file(name), value)
    }

    pub fn text(&self, name: &str, text: &str) -> Result<(), Failure> {
        let p = self.file(name);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Failure::failed)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// Best effort: a missing link never fails a run.
fn link_latest(parent: &Path, name: &str) {
    let link = parent.join("latest");
    let _ = fs::remove_file(&link);
    #[cfg(unix)]
    let _ = std::os::unix::fs::symlink(name, &link);
    #[cfg(not(unix))]
    let _ = fs::write(&link, name);
}
