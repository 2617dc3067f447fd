//! Easy/hard/overall accuracy and comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubsetTag};
use crate::error::{Error, Result};
use crate::model::{self, EncodeMode};
use crate::text::UNK_ID;
use crate::train::Checkpoint;

/// Exact `correct / total` count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub correct: usize,
    pub total: usize,
}

impl Counts {
    pub fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += correct as usize;
    }

    /// `None` for an empty subset.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: usize,
    pub correct: bool,
    pub subset: SubsetTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub easy: Counts,
    pub hard: Counts,
    /// Every instance, including those tagged unknown.
    pub overall: Counts,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn from_predictions(dataset: impl Into<String>, model: impl Into<String>, seed: u64, predictions: Vec<Prediction>) -> Self {
        let (mut easy, mut hard, mut overall) = (Counts::default(), Counts::default(), Counts::default());
        for p in &predictions {
            overall.add(p.correct);
            match p.subset {
                SubsetTag::Easy => easy.add(p.correct),
                SubsetTag::Hard => hard.add(p.correct),
                SubsetTag::Unknown => {}
            }
        }
        EvalReport {
            dataset: dataset.into(),
            model: model.into(),
            seed,
            easy,
            hard,
            overall,
            predictions,
        }
    }

    pub fn accuracy_easy(&self) -> Option<f64> {
        self.easy.accuracy()
    }

    pub fn accuracy_hard(&self) -> Option<f64> {
        self.hard.accuracy()
    }

    pub fn accuracy_overall(&self) -> Option<f64> {
        self.overall.accuracy()
    }

    pub fn n_unknown(&self) -> usize {
        self.overall.total - self.easy.total - self.hard.total
    }
}

/// Scores every instance with `mode` and tallies accuracy per subset.
pub fn evaluate(checkpoint: &Checkpoint, dataset: &Dataset, mode: EncodeMode) -> Result<EvalReport> {
    checkpoint.params.check_vocab(&checkpoint.vocab)?;
    let encoded = checkpoint.vocab.encode_dataset(dataset);
    let known = encoded
        .iter()
        .flat_map(|e| e.context.iter().chain(e.choices.iter().flatten()))
        .any(|&t| t != UNK_ID);
    if !dataset.is_empty() && !known {
        return Err(Error::VocabMismatch(format!(
            "dataset `{}` shares no tokens with the checkpoint vocabulary",
            dataset.name
        )));
    }
    let predictions = dataset
        .iter()
        .zip(&encoded)
        .map(|(inst, enc)| {
            let predicted = model::predict(&checkpoint.params, enc, mode);
            Prediction {
                id: inst.id.clone(),
                predicted,
                correct: predicted == inst.label,
                subset: inst.subset(),
            }
        })
        .collect();
    Ok(EvalReport::from_predictions(
        dataset.name.clone(),
        checkpoint.method.to_string(),
        checkpoint.config.seed,
        predictions,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub data: String,
    pub seeds: Vec<u64>,
    pub easy: Option<Stat>,
    pub hard: Option<Stat>,
    pub overall: Option<Stat>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Groups reports by (model, data) in first-seen order and summarizes each
/// column over the group's seeds.
pub fn compare(reports: &[EvalReport]) -> ComparisonTable {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        let key = (r.model.clone(), r.dataset.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let rows = order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&EvalReport) -> Option<f64>| Stat::of(&g.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            ComparisonRow {
                seeds: g.iter().map(|r| r.seed).collect(),
                easy: col(EvalReport::accuracy_easy),
                hard: col(EvalReport::accuracy_hard),
                overall: col(EvalReport::accuracy_overall),
                model: key.0,
                data: key.1,
            }
        })
        .collect();
    ComparisonTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    PlainTable,
    RecordLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain-table" | "table" => Ok(ReportFormat::PlainTable),
            "record-lines" | "records" => Ok(ReportFormat::RecordLines),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

fn cell(s: Option<Stat>, multi: bool) -> String {
    match s {
        None => "-".to_owned(),
        Some(s) if multi => format!("{:.1} ± {:.1}", 100.0 * s.mean, 100.0 * s.std),
        Some(s) => format!("{:.1}", 100.0 * s.mean),
    }
}

pub fn emit_report(table: &ComparisonTable, format: ReportFormat) -> Result<String> {
    let mut out = String::new();
    match format {
        ReportFormat::PlainTable => {
            let header = ["model", "data", "easy", "hard", "overall"].map(String::from);
            let mut lines = vec![header.to_vec()];
            for r in &table.rows {
                let multi = r.seeds.len() > 1;
                lines.push(vec![
                    r.model.clone(),
                    r.data.clone(),
                    cell(r.easy, multi),
                    cell(r.hard, multi),
                    cell(r.overall, multi),
                ]);
            }
            let widths: Vec<usize> = (0..5)
                .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
                .collect();
            for l in lines {
                let row: Vec<String> = l
                    .iter()
                    .zip(&widths)
                    .map(|(s, w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
                    .collect();
                writeln!(out, "{}", row.join("  ").trim_end()).unwrap();
            }
        }
        ReportFormat::RecordLines => {
            for r in &table.rows {
                out.push_str(&serde_json::to_string(r)?);
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Parses record-lines output back into a table.
pub fn load_records(text: &str) -> Result<ComparisonTable> {
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;
    Ok(ComparisonTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(tag: SubsetTag, ok: bool) -> Prediction {
        Prediction {
            id: String::new(),
            predicted: 0,
            correct: ok,
            subset: tag,
        }
    }

    fn report(model: &str, seed: u64, easy: (usize, usize), hard: (usize, usize)) -> EvalReport {
        let mut p = Vec::new();
        for i in 0..easy.1 {
            p.push(pred(SubsetTag::Easy, i < easy.0));
        }
        for i in 0..hard.1 {
            p.push(pred(SubsetTag::Hard, i < hard.0));
        }
        EvalReport::from_predictions("d", model, seed, p)
    }

    #[test]
    fn count_arithmetic() {
        let r = report("m", 0, (2, 2), (0, 2));
        assert_eq!(r.accuracy_easy(), Some(1.0));
        assert_eq!(r.accuracy_hard(), Some(0.0));
        assert_eq!(r.accuracy_overall(), Some(0.5));
        let all = report("m", 0, (3, 3), (4, 4));
        assert_eq!(
            (all.accuracy_easy(), all.accuracy_hard(), all.accuracy_overall()),
            (Some(1.0), Some(1.0), Some(1.0))
        );
    }

    #[test]
    fn unknown_tags_count_in_overall_only() {
        let r = EvalReport::from_predictions(
            "d",
            "m",
            0,
            vec![pred(SubsetTag::Easy, true), pred(SubsetTag::Unknown, false)],
        );
        assert_eq!(r.easy, Counts { correct: 1, total: 1 });
        assert_eq!(r.hard.total, 0);
        assert_eq!(r.accuracy_hard(), None);
        assert_eq!(r.overall, Counts { correct: 1, total: 2 });
        assert_eq!(r.n_unknown(), 1);
    }

    #[test]
    fn weighted_overall_from_subset_rates() {
        // 90.5% of 190 easy and 83.9% of 310 hard
        let overall: f64 = (0.905 * 190.0 + 0.839 * 310.0) / 500.0;
        assert!((overall - 0.864).abs() < 5e-4);
    }

    #[test]
    fn compare_groups_and_summarizes() {
        let t = compare(&[report("m", 1, (1, 1), (7, 10)), report("m", 2, (1, 1), (8, 10))]);
        assert_eq!(t.rows.len(), 1);
        let h = t.rows[0].hard.unwrap();
        assert!((h.mean - 0.75).abs() < 1e-12);
        assert!((h.std - 0.05).abs() < 1e-12);
        assert_eq!(t.rows[0].easy.unwrap().std, 0.0);

        let single = report("x", 3, (2, 4), (1, 4));
        let t = compare(std::slice::from_ref(&single));
        assert_eq!(t.rows[0].easy.unwrap().mean, 0.5);
        assert_eq!(t.rows[0].hard.unwrap().mean, 0.25);
        assert_eq!(t.rows[0].overall.unwrap().mean, 3.0 / 8.0);
        assert_eq!(t.rows[0].seeds, [3]);
    }

    #[test]
    fn row_order_is_first_seen() {
        let t = compare(&[report("z", 0, (1, 1), (1, 1)), report("a", 0, (1, 1), (1, 1)), report("z", 1, (1, 1), (1, 1))]);
        let names: Vec<_> = t.rows.iter().map(|r| r.model.as_str()).collect();
        assert_eq!(names, ["z", "a"]);
    }

    #[test]
    fn emit_formats() {
        let empty = emit_report(&ComparisonTable::default(), ReportFormat::PlainTable).unwrap();
        assert_eq!(empty.lines().count(), 1);
        let cols: Vec<_> = empty.split_whitespace().collect();
        assert_eq!(cols, ["model", "data", "easy", "hard", "overall"]);

        let t = compare(&[report("m", 1, (1, 2), (7, 10)), report("m", 2, (2, 2), (8, 10)), report("n", 1, (0, 0), (1, 3))]);
        let text = emit_report(&t, ReportFormat::RecordLines).unwrap();
        assert_eq!(load_records(&text).unwrap(), t);
        let plain = emit_report(&t, ReportFormat::PlainTable).unwrap();
        assert!(plain.contains("75.0 ± 5.0"));
        assert!(plain.lines().nth(2).unwrap().contains(" - "));
        assert!(matches!("xml".parse::<ReportFormat>(), Err(Error::UnknownFormat(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn tag() -> impl Strategy<Value = SubsetTag> {
            prop_oneof![Just(SubsetTag::Easy), Just(SubsetTag::Hard), Just(SubsetTag::Unknown)]
        }

        proptest! {
            #[test]
            fn subset_identity_and_order_independence(
                rows in proptest::collection::vec((tag(), any::<bool>()), 0..60),
                rot in 0usize..60,
            ) {
                let preds: Vec<_> = rows.iter().map(|(t, c)| pred(*t, *c)).collect();
                let r = EvalReport::from_predictions("d", "m", 0, preds.clone());
                let unknown_ok = preds.iter().filter(|p| p.subset == SubsetTag::Unknown && p.correct).count();
                prop_assert_eq!(r.overall.correct, r.easy.correct + r.hard.correct + unknown_ok);
                prop_assert_eq!(r.overall.total, preds.len());
                let mut shifted = preds;
                if !shifted.is_empty() {
                    let k = rot % shifted.len();
                    shifted.rotate_left(k);
                }
                let s = EvalReport::from_predictions("d", "m", 0, shifted);
                prop_assert_eq!((s.easy, s.hard, s.overall), (r.easy, r.hard, r.overall));
            }

            #[test]
            fn sigma_zero_iff_reports_agree(a in 0usize..=10, b in 0usize..=10) {
                let t = compare(&[report("m", 1, (1, 1), (a, 10)), report("m", 2, (1, 1), (b, 10))]);
                prop_assert_eq!(t.rows[0].hard.unwrap().std == 0.0, a == b);
            }
        }
    }
}
