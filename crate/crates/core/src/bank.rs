//! Deduplicated luminance-table banks.
//!
//! A bank counts how many files of a corpus carry each distinct luminance
//! table. Building is a fold over per-file results whose merge is associative
//! and commutative, so the parallel and sequential scans agree byte for byte.
//!
//! On disk a bank is JSONL: an optional header line
//! `{"format":"qtbank","version":1,"scanned":N,"failed":N}` followed by one
//! entry per line with keys `fp, precision, order, values, count, sources`,
//! sorted by fingerprint.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Exec};
use crate::parse::{has_jpeg_magic, luminance_table};
use crate::qt::{natural_to_zigzag, zigzag_to_natural, Precision, QtFingerprint, QuantTable};
use crate::rng::SeededRng;

/// Example sources kept per entry.
pub const MAX_SOURCES: usize = 3;

/// Head sizes reported by [`pareto`].
pub const HEAD_SIZES: [usize; 3] = [1, 6, 25];

#[derive(Debug, Error)]
pub enum BankError {
    #[error("cannot read corpus root {path}: {source}")]
    UnreadableRoot { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: stored fingerprint {stored} does not match computed {computed}")]
    FingerprintMismatch { line: usize, stored: String, computed: String },
    #[error("line {line}: {reason}")]
    EntryOutOfRange { line: usize, reason: String },
    #[error("bank is empty")]
    EmptyBank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueOrder {
    #[default]
    Natural,
    Zigzag,
}

impl ValueOrder {
    pub fn label(self) -> &'static str {
        match self {
            ValueOrder::Natural => "natural",
            ValueOrder::Zigzag => "zigzag",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "natural" => Some(ValueOrder::Natural),
            "zigzag" => Some(ValueOrder::Zigzag),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    #[default]
    Uniform,
    Frequency,
}

impl Weighting {
    pub fn label(self) -> &'static str {
        match self {
            Weighting::Uniform => "uniform",
            Weighting::Frequency => "frequency",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Weighting::Uniform),
            "frequency" => Some(Weighting::Frequency),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankEntry {
    pub fingerprint: QtFingerprint,
    pub table: QuantTable,
    pub count: u64,
    /// Lexicographically smallest relative paths seen, at most [`MAX_SOURCES`].
    pub sources: Vec<String>,
}

impl BankEntry {
    fn absorb(&mut self, other: BankEntry) {
        self.count += other.count;
        self.sources.extend(other.sources);
        self.sources.sort();
        self.sources.dedup();
        self.sources.truncate(MAX_SOURCES);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QtBank {
    entries: BTreeMap<QtFingerprint, BankEntry>,
    pub scanned: u64,
    pub failed: u64,
}

impl QtBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bank holding one observation of `table` from `source`.
    pub fn single(table: QuantTable, source: &str) -> Self {
        let mut b = Self::new();
        b.scanned = 1;
        b.insert(table, 1, vec![source.to_string()]);
        b
    }

    /// Adds `count` occurrences of `table`; does not touch `scanned`.
    pub fn insert(&mut self, table: QuantTable, count: u64, sources: Vec<String>) {
        let fingerprint = table.fingerprint();
        let mut entry = BankEntry {
            fingerprint: fingerprint.clone(),
            table: table.with_role(crate::qt::TableRole::Luminance),
            count: 0,
            sources: Vec::new(),
        };
        entry.absorb(BankEntry { fingerprint: fingerprint.clone(), table, count, sources });
        match self.entries.get_mut(&fingerprint) {
            Some(e) => e.absorb(entry),
            None => {
                self.entries.insert(fingerprint, entry);
            }
        }
    }

    /// Commutative, associative merge.
    pub fn merge(mut self, other: QtBank) -> QtBank {
        self.scanned += other.scanned;
        self.failed += other.failed;
        for (fp, e) in other.entries {
            match self.entries.get_mut(&fp) {
                Some(mine) => mine.absorb(e),
                None => {
                    self.entries.insert(fp, e);
                }
            }
        }
        self
    }

    /// Entries in fingerprint order.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &BankEntry> {
        self.entries.values()
    }

    pub fn get(&self, fp: &QtFingerprint) -> Option<&BankEntry> {
        self.entries.get(fp)
    }

    pub fn distinct_count(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_count(&self) -> u64 {
        self.entries.values().map(|e| e.count).sum()
    }
}

/// Per-file scan result.
enum FileOutcome {
    NotJpeg,
    Failed,
    Table(QuantTable),
}

fn scan_file(path: &Path) -> FileOutcome {
    let Ok(bytes) = std::fs::read(path) else {
        return FileOutcome::Failed;
    };
    if !has_jpeg_magic(&bytes) {
        return FileOutcome::NotJpeg;
    }
    match luminance_table(&bytes) {
        Ok(rec) => FileOutcome::Table(rec.table),
        Err(_) => FileOutcome::Failed,
    }
}

/// Regular files under `root` as (absolute, relative `/`-separated) pairs,
/// sorted by relative path.
pub fn list_files(root: &Path, recursive: bool) -> Result<Vec<(PathBuf, String)>, BankError> {
    let meta = std::fs::metadata(root).map_err(|source| BankError::UnreadableRoot { path: root.into(), source })?;
    if !meta.is_dir() {
        return Err(BankError::UnreadableRoot {
            path: root.into(),
            source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
        });
    }
    std::fs::read_dir(root).map_err(|source| BankError::UnreadableRoot { path: root.into(), source })?;
    let mut walk = walkdir::WalkDir::new(root).min_depth(1).follow_links(true);
    if !recursive {
        walk = walk.max_depth(1);
    }
    let mut files: Vec<(PathBuf, String)> = walk
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| {
            let rel = e.path().strip_prefix(root).ok()?;
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Some((e.into_path(), rel))
        })
        .collect();
    files.sort_by(|a, b| a.1.cmp(&b.1));
    Ok(files)
}

pub fn build_bank(root: &Path, recursive: bool) -> Result<QtBank, BankError> {
    build_bank_with(root, recursive, Exec::default())
}

/// Scans every file with JPEG magic and banks its luminance table. Files that
/// fail to parse count toward `failed` and never abort the scan.
pub fn build_bank_with(root: &Path, recursive: bool, exec: Exec) -> Result<QtBank, BankError> {
    let files = list_files(root, recursive)?;
    let partial = par::map(exec, &files, |(path, rel)| match scan_file(path) {
        FileOutcome::NotJpeg => QtBank::new(),
        FileOutcome::Failed => QtBank { scanned: 1, failed: 1, ..QtBank::new() },
        FileOutcome::Table(t) => QtBank::single(t, rel),
    });
    Ok(partial.into_iter().fold(QtBank::new(), QtBank::merge))
}

#[derive(Serialize)]
struct HeaderOut {
    format: &'static str,
    version: u32,
    scanned: u64,
    failed: u64,
}

#[derive(Serialize)]
struct EntryOut<'a> {
    fp: &'a str,
    precision: u8,
    order: &'static str,
    values: Vec<u16>,
    count: u64,
    sources: &'a [String],
}

/// Canonical JSONL text of a bank.
pub fn bank_to_jsonl(b: &QtBank, order: ValueOrder) -> String {
    let mut out = String::new();
    let header = HeaderOut { format: "qtbank", version: 1, scanned: b.scanned, failed: b.failed };
    out.push_str(&serde_json::to_string(&header).expect("serializable"));
    out.push('\n');
    for e in b.entries() {
        let values = match order {
            ValueOrder::Natural => e.table.values().to_vec(),
            ValueOrder::Zigzag => natural_to_zigzag(e.table.values()).to_vec(),
        };
        let line = EntryOut {
            fp: e.fingerprint.as_str(),
            precision: e.table.precision().bits(),
            order: order.label(),
            values,
            count: e.count,
            sources: &e.sources,
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn save_bank(b: &QtBank, path: &Path) -> Result<(), BankError> {
    save_bank_with_order(b, path, ValueOrder::Natural)
}

pub fn save_bank_with_order(b: &QtBank, path: &Path, order: ValueOrder) -> Result<(), BankError> {
    std::fs::write(path, bank_to_jsonl(b, order)).map_err(|source| BankError::Io { path: path.into(), source })
}

pub fn load_bank(path: &Path, declared_order: ValueOrder) -> Result<QtBank, BankError> {
    let text = std::fs::read_to_string(path).map_err(|source| BankError::Io { path: path.into(), source })?;
    bank_from_jsonl(&text, declared_order)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderIn {
    format: String,
    version: u32,
    scanned: u64,
    failed: u64,
}

#[derive(Deserialize)]
struct EntryIn {
    fp: Option<String>,
    precision: Option<u8>,
    order: Option<String>,
    values: Vec<i64>,
    count: Option<i64>,
    #[serde(default)]
    sources: Vec<String>,
}

/// Parses a bank, re-verifying every invariant.
///
/// Only `values` is required on entry lines. A line's own `order` field must
/// agree with `declared_order`; a stored `fp` must match the recomputed one.
pub fn bank_from_jsonl(text: &str, declared_order: ValueOrder) -> Result<QtBank, BankError> {
    let mut bank = QtBank::new();
    let mut header: Option<HeaderIn> = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let malformed = |reason: String| BankError::MalformedLine { line, reason };
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
        if value.get("format").is_some() {
            if !first {
                return Err(malformed("header must be the first line".into()));
            }
            let h: HeaderIn = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
            if h.format != "qtbank" || h.version != 1 {
                return Err(malformed(format!("unsupported format {} version {}", h.format, h.version)));
            }
            header = Some(h);
            first = false;
            continue;
        }
        first = false;
        let e: EntryIn = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let order = match e.order.as_deref() {
            None => declared_order,
            Some(s) => {
                let o = ValueOrder::parse(s).ok_or_else(|| malformed(format!("unknown order {s:?}")))?;
                if o != declared_order {
                    return Err(malformed(format!(
                        "line declares {} order but {} was requested",
                        o.label(),
                        declared_order.label()
                    )));
                }
                o
            }
        };
        if e.values.len() != 64 {
            return Err(malformed(format!("expected 64 values, found {}", e.values.len())));
        }
        let out_of_range = |reason: String| BankError::EntryOutOfRange { line, reason };
        let mut vals = [0u16; 64];
        for (k, &v) in e.values.iter().enumerate() {
            vals[k] = u16::try_from(v)
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| out_of_range(format!("value {v} at position {k} outside [1, 65535]")))?;
        }
        if order == ValueOrder::Zigzag {
            vals = zigzag_to_natural(&vals);
        }
        let table = match e.precision {
            None => QuantTable::with_min_precision(vals),
            Some(bits) => {
                let p = Precision::from_bits(bits).ok_or_else(|| out_of_range(format!("precision {bits}")))?;
                QuantTable::new(vals, p)
            }
        }
        .map_err(|err| out_of_range(err.to_string()))?;
        let computed = table.fingerprint();
        if let Some(stored) = e.fp {
            if stored != computed.as_str() {
                return Err(BankError::FingerprintMismatch {
                    line,
                    stored,
                    computed: computed.as_str().to_string(),
                });
            }
        }
        if bank.get(&computed).is_some() {
            return Err(malformed(format!("duplicate table {computed}")));
        }
        let count = match e.count {
            None => 1,
            Some(c) if c >= 1 => c as u64,
            Some(c) => return Err(out_of_range(format!("count {c} must be at least 1"))),
        };
        if e.sources.len() > MAX_SOURCES {
            return Err(malformed(format!("more than {MAX_SOURCES} sources")));
        }
        bank.insert(table, count, e.sources);
    }
    let total = bank.total_count();
    match header {
        Some(h) => {
            if total > h.scanned {
                return Err(BankError::EntryOutOfRange {
                    line: 1,
                    reason: format!("counts sum to {total} but only {} files scanned", h.scanned),
                });
            }
            bank.scanned = h.scanned;
            bank.failed = h.failed;
        }
        None => bank.scanned = total,
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub rank: usize,
    pub fingerprint: QtFingerprint,
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParetoReport {
    pub rows: Vec<ParetoRow>,
    /// (k, fraction of occurrences covered by the k most frequent tables).
    pub head_coverage: Vec<(usize, f64)>,
    pub distinct_count: usize,
    pub total: u64,
}

/// Ranks tables by count (descending, fingerprint ascending on ties).
pub fn pareto(b: &QtBank) -> Result<ParetoReport, BankError> {
    if b.is_empty() {
        return Err(BankError::EmptyBank);
    }
    let total = b.total_count();
    let mut ranked: Vec<&BankEntry> = b.entries().collect();
    ranked.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.fingerprint.cmp(&y.fingerprint)));
    let rows: Vec<ParetoRow> = ranked
        .iter()
        .enumerate()
        .map(|(i, e)| ParetoRow {
            rank: i + 1,
            fingerprint: e.fingerprint.clone(),
            count: e.count,
            share: e.count as f64 / total as f64,
        })
        .collect();
    let head_coverage = HEAD_SIZES
        .iter()
        .map(|&k| {
            let covered: u64 = rows.iter().take(k).map(|r| r.count).sum();
            (k, covered as f64 / total as f64)
        })
        .collect();
    Ok(ParetoReport { rows, head_coverage, distinct_count: b.distinct_count(), total })
}

impl ParetoReport {
    pub fn coverage(&self, k: usize) -> Option<f64> {
        self.head_coverage.iter().find(|(h, _)| *h == k).map(|&(_, c)| c)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "fp", "count", "share"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.rank.to_string(),
                r.fingerprint.as_str().to_string(),
                r.count.to_string(),
                format!("{:.6}", r.share),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii")
    }

    /// Bar chart of the first `limit` ranks plus head coverage.
    pub fn to_text(&self, limit: usize) -> String {
        const WIDTH: f64 = 40.0;
        let top = self.rows.first().map_or(1.0, |r| r.share);
        let mut s = String::new();
        let _ = writeln!(s, "distinct tables: {}  occurrences: {}", self.distinct_count, self.total);
        for r in self.rows.iter().take(limit) {
            let bar = "#".repeat(((r.share / top) * WIDTH).round().max(1.0) as usize);
            let _ = writeln!(s, "{:>4} {} {:>8} {:>7.3} {}", r.rank, &r.fingerprint.as_str()[..12], r.count, r.share, bar);
        }
        if self.rows.len() > limit {
            let rest: f64 = self.rows[limit..].iter().map(|r| r.share).sum();
            let _ = writeln!(s, "     ... {} more tables, share {:.3}", self.rows.len() - limit, rest);
        }
        for (k, c) in &self.head_coverage {
            let _ = writeln!(s, "top-{k} coverage: {c:.3}");
        }
        let sum: f64 = self.rows.iter().map(|r| r.share).sum();
        let _ = writeln!(s, "sum of shares: {sum:.3}");
        s
    }
}

/// Draws one table; uniform over distinct tables or proportional to count.
pub fn sample_table(b: &QtBank, rng: &mut SeededRng, weighting: Weighting) -> Result<QuantTable, BankError> {
    if b.is_empty() {
        return Err(BankError::EmptyBank);
    }
    let entry = match weighting {
        Weighting::Uniform => {
            let i = rng.below(b.distinct_count() as u64) as usize;
            b.entries().nth(i).expect("index in range")
        }
        Weighting::Frequency => {
            let mut pick = rng.below(b.total_count());
            b.entries()
                .find(|e| {
                    if pick < e.count {
                        true
                    } else {
                        pick -= e.count;
                        false
                    }
                })
                .expect("pick below total")
        }
    };
    Ok(entry.table)
}
