use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use suml::train::TrainConfig;

use super::train::{train_into, Outcome};
use crate::config::{self, pick_seed, Failure, RunConfig, TrainSection};
use crate::rundir::RunDir;

#[derive(Serialize)]
struct Point {
    index: usize,
    dir: String,
    values: BTreeMap<String, Value>,
    #[serde(flatten)]
    outcome: Outcome,
}

#[derive(Serialize)]
struct Summary {
    points: Vec<Point>,
    /// Index of the point with the lowest validation loss; ties go to the
    /// earlier point.
    best: Option<usize>,
}

/// Every combination of grid values, last key varying fastest.
pub(crate) fn enumerate(grid: &BTreeMap<String, Vec<Value>>) -> Vec<BTreeMap<String, Value>> {
    let mut points = vec![BTreeMap::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    q
                })
            })
            .collect();
    }
    points
}

fn apply(base: &TrainConfig, values: &BTreeMap<String, Value>) -> Result<TrainConfig, Failure> {
    let mut v = serde_json::to_value(base).map_err(Failure::failed)?;
    let obj = v.as_object_mut().expect("config serializes to an object");
    for (k, x) in values {
        if !obj.contains_key(k) {
            return Err(Failure::usage(anyhow!("grid field `{k}` is not a trainer setting")));
        }
        obj.insert(k.clone(), x.clone());
    }
    let cfg: TrainConfig = serde_json::from_value(v)
        .with_context(|| format!("grid point {values:?}"))
        .map_err(Failure::usage)?;
    cfg.validate()?;
    Ok(cfg)
}

/// `SUML_THREADS`, default 1.
fn threads() -> Result<usize, Failure> {
    match std::env::var("SUML_THREADS") {
        Err(_) => Ok(1),
        Ok(s) => s
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Failure::usage(anyhow!("SUML_THREADS must be a positive integer, got `{s}`"))),
    }
}

pub fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = config::load(path)?;
    let mut sweep = file
        .sweep
        .clone()
        .ok_or_else(|| Failure::usage(anyhow!("{} has no `sweep` section", path.display())))?;
    sweep.base.training.seed = pick_seed(seed, file.seed, sweep.base.training.seed);
    let values = enumerate(&sweep.grid);
    let sections: Vec<TrainSection> = values
        .iter()
        .map(|v| {
            Ok(TrainSection {
                training: apply(&sweep.base.training, v)?,
                ..sweep.base.clone()
            })
        })
        .collect::<Result<_, Failure>>()?;

    let rd = RunDir::create(out.as_deref().or(file.out.as_deref()), sweep.base.training.seed)?;
    rd.json(
        "config.json",
        &RunConfig {
            sweep: Some(sweep.clone()),
            ..Default::default()
        },
    )?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads()?)
        .build()
        .map_err(Failure::failed)?;
    let outcomes: Vec<Result<Outcome, Failure>> = pool.install(|| {
        sections
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let dir = rd.file(&format!("point-{i:03}"));
                fs::create_dir_all(&dir)?;
                train_into(s, &dir)
            })
            .collect()
    });

    let mut points = Vec::with_capacity(values.len());
    for (index, (v, o)) in values.into_iter().zip(outcomes).enumerate() {
        points.push(Point {
            index,
            dir: format!("point-{index:03}"),
            values: v,
            outcome: o?,
        });
    }
    let best = points
        .iter()
        .filter_map(|p| p.outcome.best_val_loss.filter(|l| l.is_finite()).map(|l| (p.index, l)))
        .fold(None, |acc: Option<(usize, f64)>, (i, l)| match acc {
            Some((_, bl)) if bl <= l => acc,
            _ => Some((i, l)),
        })
        .map(|(i, _)| i);
    let summary = Summary { points, best };
    rd.json("summary.json", &summary)?;

    println!("{} points", summary.points.len());
    if let Some(b) = best {
        let p = &summary.points[b];
        println!(
            "best point-{b:03} {} val loss {:.4}",
            serde_json::to_string(&p.values).unwrap_or_default(),
            p.outcome.best_val_loss.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", rd.path.display());
    Ok(())
}
