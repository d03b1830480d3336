//! Per-dataset model ranking aggregated across datasets.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{BenchError, Result};
use crate::runner::{RunRecord, Task, RECORD_FILE};

/// Every `record.json` directly below `dir`'s subdirectories, sorted by
/// (dataset, model, run id).
pub fn collect_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let entries = std::fs::read_dir(dir).map_err(BenchError::io(dir))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(BenchError::io(dir))?;
        let path = entry.path().join(RECORD_FILE);
        if !path.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(BenchError::io(&path))?;
        let mut rec: RunRecord = serde_json::from_str(&text)?;
        rec.dir = entry.path();
        out.push(rec);
    }
    sort_records(&mut out);
    Ok(out)
}

fn sort_records(records: &mut [RunRecord]) {
    records
        .sort_by(|a, b| (&a.dataset, &a.model, &a.run_id).cmp(&(&b.dataset, &b.model, &b.run_id)));
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entry {
    pub dataset: String,
    pub model: String,
    pub runs: usize,
    /// Mean primary metric over runs.
    pub value: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverallRow {
    pub model: String,
    pub datasets: usize,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaderboard {
    pub task: Task,
    pub metric: String,
    pub higher_is_better: bool,
    pub entries: Vec<Entry>,
    /// Sorted by mean rank, then model name.
    pub overall: Vec<OverallRow>,
}

/// Rank models per dataset on the task's primary metric (NaN last, ties by
/// model name) and average the ranks per model.
pub fn build_leaderboard(records: &[RunRecord], task: Task) -> Result<Leaderboard> {
    let mut records: Vec<RunRecord> = records.iter().filter(|r| r.task == task).cloned().collect();
    if records.is_empty() {
        return Err(BenchError::NoResults(Default::default()));
    }
    sort_records(&mut records);
    let (metric, higher_is_better) = task.primary_metric();

    let mut groups: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for r in &records {
        groups
            .entry((&r.dataset, &r.model))
            .or_default()
            .push(r.primary.value);
    }
    let mut by_dataset: BTreeMap<&str, Vec<Entry>> = BTreeMap::new();
    for ((dataset, model), values) in groups {
        by_dataset.entry(dataset).or_default().push(Entry {
            dataset: dataset.into(),
            model: model.into(),
            runs: values.len(),
            value: values.iter().sum::<f64>() / values.len() as f64,
            rank: 0,
        });
    }

    let mut entries = Vec::new();
    let mut ranks: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (_, mut rows) in by_dataset {
        rows.sort_by(|a, b| {
            compare(a.value, b.value, higher_is_better).then_with(|| a.model.cmp(&b.model))
        });
        for (i, row) in rows.iter_mut().enumerate() {
            row.rank = i + 1;
            ranks.entry(row.model.clone()).or_default().push(row.rank);
        }
        entries.extend(rows);
    }
    let mut overall: Vec<OverallRow> = ranks
        .into_iter()
        .map(|(model, r)| OverallRow {
            model,
            datasets: r.len(),
            mean_rank: r.iter().sum::<usize>() as f64 / r.len() as f64,
        })
        .collect();
    overall.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then_with(|| a.model.cmp(&b.model))
    });
    Ok(Leaderboard {
        task,
        metric: metric.into(),
        higher_is_better,
        entries,
        overall,
    })
}

fn compare(a: f64, b: f64, higher_is_better: bool) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ if higher_is_better => b.total_cmp(&a),
        _ => a.total_cmp(&b),
    }
}

impl Leaderboard {
    pub fn to_text(&self) -> String {
        let dir = if self.higher_is_better {
            "higher"
        } else {
            "lower"
        };
        let mut s = format!(
            "task {} | metric {} ({dir} is better)\n\n",
            self.task.as_str(),
            self.metric
        );
        let mw = self
            .entries
            .iter()
            .map(|e| e.model.len())
            .chain(["model".len()])
            .max()
            .unwrap_or(5);
        let dw = self
            .entries
            .iter()
            .map(|e| e.dataset.len())
            .chain(["dataset".len()])
            .max()
            .unwrap_or(7);
        let _ = writeln!(
            s,
            "{:<dw$}  {:<mw$}  {:>4}  {:>5}  {:>14}",
            "dataset", "model", "rank", "runs", self.metric
        );
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<dw$}  {:<mw$}  {:>4}  {:>5}  {:>14.6}",
                e.dataset, e.model, e.rank, e.runs, e.value
            );
        }
        let _ = writeln!(
            s,
            "\n{:<4}  {:<mw$}  {:>9}  {:>8}",
            "rank", "model", "mean_rank", "datasets"
        );
        for (i, o) in self.overall.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<4}  {:<mw$}  {:>9.3}  {:>8}",
                i + 1,
                o.model,
                o.mean_rank,
                o.datasets
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset,model,rank,runs,value\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                csv_cell(&e.dataset),
                csv_cell(&e.model),
                e.rank,
                e.runs,
                e.value
            );
        }
        for o in &self.overall {
            let _ = writeln!(
                s,
                "ALL,{},{},{},",
                csv_cell(&o.model),
                o.mean_rank,
                o.datasets
            );
        }
        s
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `leaderboard`: read every run under `dir` and rank the given task.
pub fn cmd_leaderboard(dir: &Path, task: Task) -> Result<Leaderboard> {
    let records = collect_records(dir)?;
    build_leaderboard(&records, task).map_err(|e| match e {
        BenchError::NoResults(_) => BenchError::NoResults(dir.into()),
        e => e,
    })
}
