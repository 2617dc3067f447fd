use std::path::PathBuf;

use suml::cues::{cue_report, ProbeAccuracy};
use suml::data::{train_val_split, Dataset, SplitSpec};
use suml::eval::evaluate;
use suml::model::EncodeMode;
use suml::text::build_vocab;
use suml::train::train_contextless_probe;

use super::{dataset, probe_config};
use crate::config::{pick_seed, Failure};
use crate::rundir::RunDir;

pub struct Args {
    pub dataset: PathBuf,
    pub top_k: usize,
    pub min_applicability: usize,
    pub probes: usize,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn run(a: Args) -> Result<(), Failure> {
    let ds = dataset(&a.dataset)?;
    let (file, mut probe) = probe_config(a.config.as_deref(), &ds)?;
    probe.seed = pick_seed(a.seed, file.seed, probe.seed);

    // Each probe holds out its own tenth of the data and is scored there.
    let mut accuracies = Vec::new();
    if a.probes > 0 {
        let vocab = build_vocab(&[&ds], 1)?;
        let seeds: Vec<u64> = (0..a.probes as u64).map(|i| probe.seed + i).collect();
        let empty = Dataset::new("", Vec::new());
        let probes = train_contextless_probe(&ds, &empty, &vocab, &probe, &seeds)?;
        for (cp, &seed) in probes.iter().zip(&seeds) {
            let (_, val) = train_val_split(&ds, SplitSpec::nine_to_one(seed))?;
            let r = evaluate(cp, &val, EncodeMode::Contextless)?;
            accuracies.push(ProbeAccuracy {
                seed,
                accuracy: r.accuracy_overall().unwrap_or(0.0),
            });
        }
    }

    let report = cue_report(&ds, a.top_k, a.min_applicability, accuracies);
    let rd = RunDir::create(a.out.as_deref().or(file.out.as_deref()), probe.seed)?;
    rd.json("cue_report.json", &report)?;

    println!("{:<16} {:>6} {:>8} {:>8}", "token", "applic", "product", "coverage");
    for t in &report.tokens {
        let p = t.productivity.map_or("-".into(), |p| format!("{p:.3}"));
        println!("{:<16} {:>6} {:>8} {:>8.3}", t.token, t.applicability, p, t.coverage);
    }
    for p in &report.probe_accuracies {
        println!("probe seed {} accuracy {:.3} (random {:.3})", p.seed, p.accuracy, report.random_baseline);
    }
    println!("wrote {}", rd.path.display());
    Ok(())
}
