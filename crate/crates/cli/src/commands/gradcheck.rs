use std::path::PathBuf;

use anyhow::anyhow;
use serde::Serialize;
use suml::gradcheck::{grad_check, random_case, standard_objectives, GradCheckOptions, GradCheckReport};
use suml::text::EncodedInstance;

use crate::config::Failure;
use crate::rundir::RunDir;

pub const TOLERANCE: f64 = 1e-6;

#[derive(Serialize)]
struct Entry {
    seed: u64,
    report: GradCheckReport,
}

#[derive(Serialize)]
struct Summary {
    tolerance: f64,
    step: f64,
    inject_fault: bool,
    passed: bool,
    max_rel_error: f64,
    results: Vec<Entry>,
}

pub fn run(seed: u64, seeds: u64, inject_fault: bool, out: Option<PathBuf>) -> Result<(), Failure> {
    if seeds == 0 {
        return Err(Failure::usage(anyhow!("--seeds must be at least 1")));
    }
    let opts = GradCheckOptions {
        inject_fault,
        ..Default::default()
    };
    let mut results = Vec::new();
    for s in seed..seed + seeds {
        let (params, data) = random_case(s)?;
        let batch: Vec<&EncodedInstance> = data.iter().collect();
        for obj in standard_objectives() {
            let report = grad_check(&params, &batch, obj, GradCheckOptions { seed: s, ..opts })?;
            println!(
                "seed {s:<4} {:<12} max_rel_error {:.3e} over {} coordinates",
                report.objective, report.max_rel_error, report.checked
            );
            results.push(Entry { seed: s, report });
        }
    }
    let max = results.iter().map(|e| e.report.max_rel_error).fold(0.0, f64::max);
    let passed = max <= TOLERANCE;
    let rd = RunDir::create(out.as_deref(), seed)?;
    rd.json(
        "gradcheck.json",
        &Summary {
            tolerance: TOLERANCE,
            step: opts.step,
            inject_fault,
            passed,
            max_rel_error: max,
            results,
        },
    )?;
    if passed {
        println!("PASS max_rel_error {max:.3e} <= {TOLERANCE:e}");
        Ok(())
    } else {
        println!("FAIL max_rel_error {max:.3e} > {TOLERANCE:e}");
        Err(Failure::failed(anyhow!("gradient check failed")))
    }
}
