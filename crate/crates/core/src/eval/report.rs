//! Factorial result tables: one row per (dataset, condition), one column per
//! (model, training) pair, best value per row marked within each model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use super::{EvalError, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    F1,
    Iou,
    Fpr,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::F1 => "f1",
            Metric::Iou => "iou",
            Metric::Fpr => "fpr_pix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Some(Metric::F1),
            "iou" => Some(Metric::Iou),
            "fpr" | "fpr_pix" => Some(Metric::Fpr),
            _ => None,
        }
    }

    fn value(self, r: &MetricsReport) -> Option<f64> {
        match self {
            Metric::F1 => r.mean_f1(),
            Metric::Iou => r.mean_iou(),
            Metric::Fpr => r.mean_fpr(),
        }
    }

    fn lower_is_better(self) -> bool {
        self == Metric::Fpr
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub model: String,
    pub training: String,
    pub dataset: String,
    pub condition: String,
    pub report: MetricsReport,
}

/// One line of a runs file: labels plus the path of a metrics CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub model: String,
    pub training: String,
    pub dataset: String,
    pub condition: String,
    pub metrics: PathBuf,
}

/// Reads `model,training,dataset,condition,metrics` rows.
pub fn parse_runs_csv(text: &str) -> Result<Vec<RunSpec>, EvalError> {
    let bad = |e: String| EvalError::Malformed(e);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| bad(format!("runs file lacks column {name}")))
    };
    let idx = [col("model")?, col("training")?, col("dataset")?, col("condition")?, col("metrics")?];
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| rec.get(idx[i]).unwrap_or("").trim().to_string();
        out.push(RunSpec { model: f(0), training: f(1), dataset: f(2), condition: f(3), metrics: f(4).into() });
    }
    Ok(out)
}

/// Maps common spellings onto `Orig.`, `Std`, `Real`.
pub fn canonical_condition(c: &str) -> String {
    match c.trim().trim_end_matches('.').to_ascii_lowercase().as_str() {
        "orig" | "original" => "Orig.".into(),
        "std" | "standard" => "Std".into(),
        "real" => "Real".into(),
        _ => c.trim().to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub metric: Metric,
    /// `(model, training)` in first-appearance order.
    pub columns: Vec<(String, String)>,
    /// `(dataset, condition)`.
    pub rows: Vec<(String, String)>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub best: Vec<Vec<bool>>,
}

fn first_appearance<T: Clone + PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

fn condition_rank(c: &str) -> usize {
    ["Orig.", "Std", "Real"].iter().position(|&k| k == c).unwrap_or(3)
}

pub fn factorial_report(runs: &[RunRecord], metric: Metric) -> Result<ReportTable, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let columns = first_appearance(runs.iter().map(|r| (r.model.clone(), r.training.clone())));
    let datasets = first_appearance(runs.iter().map(|r| r.dataset.clone()));
    let conditions = first_appearance(runs.iter().map(|r| canonical_condition(&r.condition)));
    let mut rows = Vec::new();
    for d in &datasets {
        let mut cs: Vec<&String> = conditions
            .iter()
            .filter(|c| runs.iter().any(|r| &r.dataset == d && &canonical_condition(&r.condition) == *c))
            .collect();
        // stable: known conditions first, the rest keep first-appearance order
        cs.sort_by_key(|c| condition_rank(c));
        rows.extend(cs.into_iter().map(|c| (d.clone(), c.clone())));
    }

    let mut values: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    for r in runs {
        let cond = canonical_condition(&r.condition);
        let ri = rows.iter().position(|(d, c)| *d == r.dataset && *c == cond).expect("row exists");
        let ci = columns.iter().position(|(m, t)| *m == r.model && *t == r.training).expect("column exists");
        let v = metric.value(&r.report);
        if let Some(prev) = values.insert((ri, ci), v) {
            if prev != v {
                return Err(EvalError::ConflictingDuplicateRuns(format!(
                    "{}/{} on {} {}",
                    r.model, r.training, r.dataset, cond
                )));
            }
        }
    }

    let cells: Vec<Vec<Option<f64>>> = (0..rows.len())
        .map(|ri| (0..columns.len()).map(|ci| values.get(&(ri, ci)).copied().flatten()).collect())
        .collect();
    let families = first_appearance(columns.iter().map(|(m, _)| m.clone()));
    let mut best = vec![vec![false; columns.len()]; rows.len()];
    for (ri, row) in cells.iter().enumerate() {
        for fam in &families {
            // compare at printed precision so ties are marked together
            let members: Vec<(usize, i64)> = columns
                .iter()
                .enumerate()
                .filter(|(_, (m, _))| m == fam)
                .filter_map(|(ci, _)| row[ci].map(|v| (ci, (v * 1000.0).round() as i64)))
                .collect();
            if members.len() < 2 {
                continue;
            }
            let target = if metric.lower_is_better() {
                members.iter().map(|m| m.1).min()
            } else {
                members.iter().map(|m| m.1).max()
            }
            .expect("non-empty");
            for (ci, v) in members {
                best[ri][ci] = v == target;
            }
        }
    }
    Ok(ReportTable { metric, columns, rows, cells, best })
}

impl ReportTable {
    fn cell(&self, ri: usize, ci: usize) -> String {
        match self.cells[ri][ci] {
            None => "--".into(),
            Some(v) if self.best[ri][ci] => format!("{v:.3}*"),
            Some(v) => format!("{v:.3}"),
        }
    }

    /// Header `dataset,condition,<model>/<training>,...`; best cells carry a
    /// trailing `*`, missing cells print `--`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head = vec!["dataset".to_string(), "condition".to_string()];
        head.extend(self.columns.iter().map(|(m, t)| format!("{m}/{t}")));
        w.write_record(&head).expect("in-memory write");
        for (ri, (d, c)) in self.rows.iter().enumerate() {
            let mut rec = vec![d.clone(), c.clone()];
            rec.extend((0..self.columns.len()).map(|ci| self.cell(ri, ci)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Aligned text: a model header row above a training header row.
    pub fn to_text(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut models = vec![String::new(), String::new()];
        let mut last = None;
        for (m, _) in &self.columns {
            models.push(if last == Some(m) { String::new() } else { m.clone() });
            last = Some(m);
        }
        grid.push(models);
        let mut trainings = vec!["dataset".to_string(), "condition".to_string()];
        trainings.extend(self.columns.iter().map(|(_, t)| t.clone()));
        grid.push(trainings);
        for (ri, (d, c)) in self.rows.iter().enumerate() {
            let mut row = vec![d.clone(), c.clone()];
            row.extend((0..self.columns.len()).map(|ci| self.cell(ri, ci)));
            grid.push(row);
        }
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        let _ = writeln!(s, "metric: {} (* best per row within each model)", self.metric.label());
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (v, w))| if j < 2 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(s, "{}", line.join("  ").trim_end());
        }
        s
    }
}
