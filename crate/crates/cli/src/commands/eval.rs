use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use suml::eval::{compare, emit_report, evaluate, ReportFormat};
use suml::model::EncodeMode;
use suml::train::load_checkpoint;

use super::dataset;
use crate::config::Failure;
use crate::rundir::RunDir;

fn parse_mode(s: &str) -> Result<EncodeMode, Failure> {
    match s {
        "full" => Ok(EncodeMode::Full),
        "contextless" => Ok(EncodeMode::Contextless),
        other => Err(Failure::usage(anyhow!("unknown mode `{other}`, expected full or contextless"))),
    }
}

pub fn run(
    checkpoints: &[PathBuf],
    datasets: &[PathBuf],
    format: &str,
    mode: Option<&str>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let format: ReportFormat = format.parse()?;
    let mode = mode.map(parse_mode).transpose()?;
    let cps = checkpoints
        .iter()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>, _>>()?;
    let data = datasets.iter().map(|p| dataset(p)).collect::<Result<Vec<_>, _>>()?;

    let mut reports = Vec::new();
    let mut files = Vec::new();
    for (ci, cp) in cps.iter().enumerate() {
        let mode = mode.unwrap_or(cp.method.eval_mode());
        for ds in &data {
            let r = evaluate(cp, ds, mode)?;
            let name = if cps.len() == 1 {
                format!("report-{}.json", ds.name)
            } else {
                format!("report-{ci}-{}-{}.json", cp.method, ds.name)
            };
            files.push(name);
            reports.push(r);
        }
    }
    let table = compare(&reports);

    let seed = cps.first().map_or(0, |c| c.config.seed);
    let rd = RunDir::create(out.as_deref().or(Some(Path::new(crate::rundir::DEFAULT_OUT))), seed)?;
    for (name, r) in files.iter().zip(&reports) {
        rd.json(name, r)?;
    }
    rd.text("comparison.txt", &emit_report(&table, ReportFormat::PlainTable)?)?;
    rd.text("comparison.jsonl", &emit_report(&table, ReportFormat::RecordLines)?)?;
    print!("{}", emit_report(&table, format)?);
    eprintln!("wrote {}", rd.path.display());
    Ok(())
}
