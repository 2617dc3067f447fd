use std::path::{Path, PathBuf};

use serde::Serialize;
use suml::cues::{all_token_stats, TokenStats};
use suml::data::save_jsonl;
use suml::synth::{cued_fraction, generate_synthetic};

use crate::config::{self, pick_seed, Failure, RunConfig};
use crate::rundir::RunDir;

#[derive(Serialize)]
struct Split {
    name: String,
    count: usize,
    cued_fraction: f64,
}

#[derive(Serialize)]
struct Manifest {
    seed: u64,
    splits: Vec<Split>,
    cue_token: String,
    /// Statistics of the cue token on the training split.
    cue_stats: Option<TokenStats>,
    /// `pairing[key] = answer`.
    pairing: Vec<usize>,
}

pub fn run(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let file = config::load(path)?;
    let mut gen = file
        .gen
        .clone()
        .ok_or_else(|| Failure::usage(anyhow::anyhow!("{} has no `gen` section", path.display())))?;
    gen.seed = pick_seed(seed, file.seed, gen.seed);
    let synth = generate_synthetic(&gen)?;

    let rd = RunDir::create(out.as_deref().or(file.out.as_deref()), gen.seed)?;
    let mut splits = Vec::new();
    for ds in [&synth.train, &synth.test_easy, &synth.test_hard] {
        save_jsonl(ds, rd.file(&format!("{}.jsonl", ds.name)))?;
        splits.push(Split {
            name: ds.name.clone(),
            count: ds.len(),
            cued_fraction: cued_fraction(ds),
        });
    }
    // both test subsets in one file, tags intact
    let test = suml::data::Dataset::concat("test", &[&synth.test_easy, &synth.test_hard]);
    save_jsonl(&test, rd.file("test.jsonl"))?;
    let cue = gen.cue_token.to_lowercase();
    let manifest = Manifest {
        seed: gen.seed,
        cue_stats: all_token_stats(&synth.train).into_iter().find(|s| s.token == cue),
        cue_token: cue,
        splits,
        pairing: synth.pairing.clone(),
    };
    rd.json("manifest.json", &manifest)?;
    rd.json(
        "config.json",
        &RunConfig {
            gen: Some(gen.clone()),
            ..Default::default()
        },
    )?;

    for s in &manifest.splits {
        println!("{:<10} {:>6} instances  cued {:.3}", s.name, s.count, s.cued_fraction);
    }
    println!("wrote {}", rd.path.display());
    Ok(())
}
