use std::path::{Path, PathBuf};

use suml::cues::split_easy_hard;
use suml::data::{save_jsonl, Dataset};
use suml::text::build_vocab;
use suml::train::train_contextless_probe;

use super::{dataset, probe_config};
use crate::config::{pick_seed, Failure};
use crate::rundir::RunDir;

pub fn run(
    train: &Path,
    eval: &Path,
    seeds: usize,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    if seeds == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--seeds must be at least 1")));
    }
    let tr = dataset(train)?;
    let ev = dataset(eval)?;
    let (file, mut probe) = probe_config(config, &tr)?;
    probe.seed = pick_seed(seed, file.seed, probe.seed);

    let vocab = build_vocab(&[&tr], 1)?;
    let probe_seeds: Vec<u64> = (0..seeds as u64).map(|i| probe.seed + i).collect();
    let probes = train_contextless_probe(&tr, &Dataset::new("", Vec::new()), &vocab, &probe, &probe_seeds)?;
    let report = split_easy_hard(&ev, &probes);

    let rd = RunDir::create(out.as_deref().or(file.out.as_deref()), probe.seed)?;
    rd.json("split_report.json", &report)?;
    save_jsonl(&report.tag(&ev), rd.file(&format!("{}.tagged.jsonl", ev.name)))?;

    println!("{}: {} easy, {} hard over {} probes", ev.name, report.n_easy, report.n_hard, seeds);
    println!("wrote {}", rd.path.display());
    Ok(())
}
