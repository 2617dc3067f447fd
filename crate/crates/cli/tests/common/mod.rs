#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn suml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suml"))
        .args(args)
        .env("SUML_THREADS", "1")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let o = suml(args);
    assert!(
        o.status.success(),
        "suml {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

pub fn code(args: &[&str]) -> i32 {
    suml(args).status.code().expect("exit code")
}

pub fn write_json(path: &Path, v: &Value) -> PathBuf {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_owned()
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The newest run directory under `parent`.
pub fn latest(parent: &Path) -> PathBuf {
    fs::canonicalize(parent.join("latest")).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn gen_config(dir: &Path, name: &str, gen: Value) -> PathBuf {
    write_json(&dir.join(name), &json!({ "gen": gen }))
}

/// Generates a dataset into `<dir>/data-<tag>` and returns the run directory.
pub fn generate(dir: &Path, tag: &str, gen: Value) -> PathBuf {
    let cfg = gen_config(dir, &format!("gen-{tag}.json"), gen);
    let out = dir.join(format!("data-{tag}"));
    ok(&["gen", "--config", s(&cfg), "--out", s(&out)]);
    latest(&out)
}

pub fn desk_gen(seed: u64) -> Value {
    json!({
        "n_train": 2000, "n_test_easy": 500, "n_test_hard": 500, "m": 3,
        "n_keys": 8, "context_fillers": 2, "choice_fillers": 2,
        "cue_rate": 0.9, "rule_strength": 0.95, "seed": seed
    })
}

pub fn small_gen(seed: u64) -> Value {
    json!({
        "n_train": 300, "n_test_easy": 60, "n_test_hard": 60, "m": 3,
        "n_keys": 8, "cue_rate": 0.9, "seed": seed
    })
}

/// Every file below `dir`, as (relative path, bytes), sorted.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
