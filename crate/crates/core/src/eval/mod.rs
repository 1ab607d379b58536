//! Pixel-level localization metrics.
//!
//! A probability map is thresholded at `tau` (inclusive) into a prediction
//! mask and compared with a ground-truth mask:
//!
//! * `f1 = 2tp / (2tp + fp + fn)`
//! * `iou = tp / (tp + fp + fn)`
//! * `fpr_pix = fp / (H * W)`
//!
//! Metrics are computed per image and averaged. When an image has no
//! positive pixels in either mask, F1 and IoU are defined as 1 and the row is
//! flagged `empty`.

mod report;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::forensics::ProbMap;
use crate::par::{self, Exec};
use crate::pnm::{has_pnm_magic, read_pgm_any};

pub use report::{canonical_condition, factorial_report, parse_runs_csv, Metric, ReportTable, RunRecord, RunSpec};

pub const DEFAULT_TAU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch: prediction {pred:?}, ground truth {gt:?}")]
    DimensionMismatch { pred: (u32, u32), gt: (u32, u32) },
    #[error("no prediction/ground-truth pairs found")]
    NoPairs,
    #[error("stem {stem:?} matches more than one file in {dir}")]
    StemCollision { stem: String, dir: PathBuf },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("conflicting duplicate runs for {0}")]
    ConflictingDuplicateRuns(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, EvalError> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize {
            return Err(EvalError::Malformed(format!("{width}x{height} mask with {} pixels", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn positives(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }

    pub fn pixels(&self) -> u64 {
        self.data.len() as u64
    }

    /// Ground-truth mask from a PGM: positive where the value is at least
    /// half of 255 on the 8-bit scale (128 for maxval 255).
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, EvalError> {
        let (g, maxval) = read_pgm_any(bytes).map_err(|e| EvalError::Malformed(e.to_string()))?;
        let data = g.data.iter().map(|&v| u64::from(v) * 255 >= 128 * u64::from(maxval)).collect();
        Self::new(g.width, g.height, data)
    }
}

/// `mask(i) = p(i) >= tau`.
pub fn binarize(p: &ProbMap, tau: f64) -> BinaryMask {
    BinaryMask {
        width: p.width(),
        height: p.height(),
        data: p.values().iter().map(|&v| v >= tau).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PixelCounts {
    /// F1 as an exact fraction `(numerator, denominator)`; `(1, 1)` when empty.
    pub fn f1_ratio(&self) -> (u64, u64) {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            (1, 1)
        } else {
            (2 * self.tp, den)
        }
    }

    pub fn iou_ratio(&self) -> (u64, u64) {
        let den = self.tp + self.fp + self.fn_;
        if den == 0 {
            (1, 1)
        } else {
            (self.tp, den)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

pub fn pixel_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<PixelCounts, EvalError> {
    if (pred.width, pred.height) != (gt.width, gt.height) {
        return Err(EvalError::DimensionMismatch {
            pred: (pred.width, pred.height),
            gt: (gt.width, gt.height),
        });
    }
    let mut c = PixelCounts::default();
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// `(f1, iou, empty)`; both are 1 when the counts are all zero.
pub fn f1_iou(c: &PixelCounts) -> (f64, f64, bool) {
    let ratio = |(n, d): (u64, u64)| n as f64 / d as f64;
    (ratio(c.f1_ratio()), ratio(c.iou_ratio()), c.is_empty())
}

/// Positive pixels over all pixels.
pub fn fpr_pix(pred: &BinaryMask) -> f64 {
    pred.positives() as f64 / pred.pixels() as f64
}

/// Area under the ROC curve of `scores` against `labels`, counting ties as
/// one half. `None` when either class is empty.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sweep groups of equal scores from low to high
    let (mut neg_below, mut acc, mut i) = (0.0, 0.0, 0);
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0.0, 0.0);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                p += 1.0;
            } else {
                n += 1.0;
            }
            j += 1;
        }
        acc += p * (neg_below + 0.5 * n);
        neg_below += n;
        i = j;
    }
    Some(acc / (pos * neg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Predictions scored against ground-truth masks.
    Tampered,
    /// Authentic images; every predicted positive is a false positive.
    Unaltered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image_id: String,
    pub counts: PixelCounts,
    pub pixels: u64,
    pub f1: f64,
    pub iou: f64,
    pub fpr_pix: f64,
    /// Empty when the row is clean; `empty` rows count toward means, error
    /// rows do not.
    pub flags: Vec<String>,
}

impl MetricsRow {
    pub fn is_error(&self) -> bool {
        self.flags.iter().any(|f| f != "empty")
    }

    fn error(image_id: &str, flag: String) -> Self {
        Self {
            image_id: image_id.to_string(),
            counts: PixelCounts::default(),
            pixels: 0,
            f1: 0.0,
            iou: 0.0,
            fpr_pix: 0.0,
            flags: vec![flag],
        }
    }

    fn scored(image_id: &str, counts: PixelCounts, pixels: u64) -> Self {
        let (f1, iou, empty) = f1_iou(&counts);
        Self {
            image_id: image_id.to_string(),
            counts,
            pixels,
            f1,
            iou,
            fpr_pix: counts.fp as f64 / pixels as f64,
            flags: if empty { vec!["empty".into()] } else { Vec::new() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub condition: String,
    pub tau: f64,
    pub mode: EvalMode,
    /// Sorted by image id.
    pub rows: Vec<MetricsRow>,
    /// Files present on only one side, sorted.
    pub unmatched: Vec<String>,
}

impl MetricsReport {
    fn valid(&self) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(|r| !r.is_error())
    }

    fn mean_of(&self, f: impl Fn(&MetricsRow) -> f64) -> Option<f64> {
        let vals: Vec<f64> = self.valid().map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn mean_f1(&self) -> Option<f64> {
        match self.mode {
            EvalMode::Tampered => self.mean_of(|r| r.f1),
            EvalMode::Unaltered => None,
        }
    }

    pub fn mean_iou(&self) -> Option<f64> {
        match self.mode {
            EvalMode::Tampered => self.mean_of(|r| r.iou),
            EvalMode::Unaltered => None,
        }
    }

    pub fn mean_fpr(&self) -> Option<f64> {
        self.mean_of(|r| r.fpr_pix)
    }

    /// Per-image CSV. Unaltered reports carry only the false-positive columns.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let flags = |r: &MetricsRow| r.flags.join(";");
        match self.mode {
            EvalMode::Tampered => {
                w.write_record(["image_id", "condition", "tp", "fp", "fn", "f1", "iou", "fpr_pix", "flags"])
                    .expect("in-memory write");
                for r in &self.rows {
                    w.write_record([
                        r.image_id.clone(),
                        self.condition.clone(),
                        r.counts.tp.to_string(),
                        r.counts.fp.to_string(),
                        r.counts.fn_.to_string(),
                        format!("{:.6}", r.f1),
                        format!("{:.6}", r.iou),
                        format!("{:.6}", r.fpr_pix),
                        flags(r),
                    ])
                    .expect("in-memory write");
                }
            }
            EvalMode::Unaltered => {
                w.write_record(["image_id", "condition", "fp", "pixels", "fpr_pix", "flags"]).expect("in-memory write");
                for r in &self.rows {
                    w.write_record([
                        r.image_id.clone(),
                        self.condition.clone(),
                        r.counts.fp.to_string(),
                        r.pixels.to_string(),
                        format!("{:.6}", r.fpr_pix),
                        flags(r),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Reads a CSV written by [`MetricsReport::to_csv`]. Rows keep the
    /// printed (6-decimal) values.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |e: String| EvalError::Malformed(e);
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers().map_err(|e| bad(e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let mode = if col("f1").is_some() { EvalMode::Tampered } else { EvalMode::Unaltered };
        let need = |name: &str| col(name).ok_or_else(|| bad(format!("missing column {name}")));
        let (id_i, cond_i, fp_i, fpr_i, flags_i) =
            (need("image_id")?, need("condition")?, need("fp")?, need("fpr_pix")?, need("flags")?);
        let mut rows = Vec::new();
        let mut condition = String::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let get = |i: usize| rec.get(i).unwrap_or("").to_string();
            let num = |i: usize| get(i).parse::<f64>().map_err(|e| bad(format!("{e}: {:?}", get(i))));
            let int = |i: usize| get(i).parse::<u64>().map_err(|e| bad(format!("{e}: {:?}", get(i))));
            condition = get(cond_i);
            let flags: Vec<String> = get(flags_i).split(';').filter(|s| !s.is_empty()).map(String::from).collect();
            let mut row = MetricsRow {
                image_id: get(id_i),
                counts: PixelCounts { fp: int(fp_i)?, ..PixelCounts::default() },
                pixels: 0,
                f1: 0.0,
                iou: 0.0,
                fpr_pix: num(fpr_i)?,
                flags,
            };
            if mode == EvalMode::Tampered {
                row.counts.tp = int(need("tp")?)?;
                row.counts.fn_ = int(need("fn")?)?;
                row.f1 = num(need("f1")?)?;
                row.iou = num(need("iou")?)?;
            } else {
                row.pixels = int(need("pixels")?)?;
            }
            rows.push(row);
        }
        Ok(Self { condition, tau: DEFAULT_TAU, mode, rows, unmatched: Vec::new() })
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let fmt = |v: Option<f64>| v.map_or("--".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(s, "condition: {}  tau: {}  images: {}", self.condition, self.tau, self.rows.len());
        if self.mode == EvalMode::Tampered {
            let _ = writeln!(s, "mean f1: {}", fmt(self.mean_f1()));
            let _ = writeln!(s, "mean iou: {}", fmt(self.mean_iou()));
        }
        let _ = writeln!(s, "mean fpr_pix: {}", fmt(self.mean_fpr()));
        let flagged = self.rows.iter().filter(|r| !r.flags.is_empty()).count();
        let _ = writeln!(s, "flagged rows: {flagged}  unmatched files: {}", self.unmatched.len());
        s
    }
}

/// Ground truth for [`evaluate_set`].
#[derive(Debug, Clone)]
pub enum GroundTruth<'a> {
    Masks(&'a Path),
    Unaltered,
}

fn stem_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(s, _)| s)
}

/// PGM files directly inside `dir`, keyed by stem.
fn pgm_files_by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>, EvalError> {
    let rd = std::fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.into(), source })?;
    let mut names: Vec<(String, PathBuf)> = rd
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    names.sort();
    let mut out = BTreeMap::new();
    for (name, path) in names {
        let mut head = [0u8; 3];
        let is_pgm = std::fs::File::open(&path)
            .and_then(|mut f| std::io::Read::read_exact(&mut f, &mut head))
            .is_ok()
            && has_pnm_magic(&head)
            && head[1] == b'5';
        if !is_pgm {
            continue;
        }
        let stem = stem_of(&name).to_string();
        if out.insert(stem.clone(), path).is_some() {
            return Err(EvalError::StemCollision { stem, dir: dir.into() });
        }
    }
    Ok(out)
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("unreadable: {e}"))
}

fn score_pair(id: &str, pred: &Path, gt: Option<&Path>, tau: f64) -> MetricsRow {
    let pred = match read(pred).and_then(|b| ProbMap::from_pgm(&b).map_err(|e| format!("bad prediction: {e}"))) {
        Ok(p) => binarize(&p, tau),
        Err(flag) => return MetricsRow::error(id, flag),
    };
    let Some(gt) = gt else {
        let counts = PixelCounts { fp: pred.positives(), ..PixelCounts::default() };
        let mut row = MetricsRow::scored(id, counts, pred.pixels());
        row.flags.clear();
        return row;
    };
    let gt = match read(gt).and_then(|b| BinaryMask::from_pgm(&b).map_err(|e| format!("bad mask: {e}"))) {
        Ok(m) => m,
        Err(flag) => return MetricsRow::error(id, flag),
    };
    match pixel_counts(&pred, &gt) {
        Ok(c) => MetricsRow::scored(id, c, pred.pixels()),
        Err(e) => MetricsRow::error(id, format!("dimension_mismatch: {e}")),
    }
}

/// Scores every prediction map in `pred_dir` (PGM, matched by stem).
pub fn evaluate_set(
    pred_dir: &Path,
    gt: GroundTruth<'_>,
    tau: f64,
    condition: &str,
    exec: Exec,
) -> Result<MetricsReport, EvalError> {
    let preds = pgm_files_by_stem(pred_dir)?;
    let (pairs, unmatched, mode) = match gt {
        GroundTruth::Masks(dir) => {
            let masks = pgm_files_by_stem(dir)?;
            let pairs: Vec<(String, PathBuf, Option<PathBuf>)> = preds
                .iter()
                .filter_map(|(s, p)| masks.get(s).map(|m| (s.clone(), p.clone(), Some(m.clone()))))
                .collect();
            let mut unmatched: Vec<String> = preds
                .keys()
                .filter(|s| !masks.contains_key(*s))
                .map(|s| format!("prediction:{s}"))
                .chain(masks.keys().filter(|s| !preds.contains_key(*s)).map(|s| format!("mask:{s}")))
                .collect();
            unmatched.sort();
            (pairs, unmatched, EvalMode::Tampered)
        }
        GroundTruth::Unaltered => {
            let pairs = preds.iter().map(|(s, p)| (s.clone(), p.clone(), None)).collect();
            (pairs, Vec::new(), EvalMode::Unaltered)
        }
    };
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let rows = par::map(exec, &pairs, |(id, pred, gt)| score_pair(id, pred, gt.as_deref(), tau));
    Ok(MetricsReport { condition: condition.to_string(), tau, mode, rows, unmatched })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, pos: &[usize]) -> BinaryMask {
        let mut d = vec![false; (w * h) as usize];
        for &i in pos {
            d[i] = true;
        }
        BinaryMask::new(w, h, d).unwrap()
    }

    #[test]
    fn binarize_is_inclusive() {
        let half = ProbMap::new(2, 2, vec![0.5; 4]).unwrap();
        assert_eq!(binarize(&half, 0.5).positives(), 4);
        assert_eq!(binarize(&ProbMap::zeros(3, 3), 0.5).positives(), 0);
        assert_eq!(binarize(&ProbMap::zeros(3, 3), 0.0).positives(), 9);
    }

    #[test]
    fn counts_by_hand() {
        let gt = mask(4, 4, &[0, 1, 4, 5]);
        assert_eq!(pixel_counts(&gt, &gt).unwrap(), PixelCounts { tp: 4, fp: 0, fn_: 0 });
        // overlaps two, adds two elsewhere
        let pred = mask(4, 4, &[0, 1, 10, 15]);
        let c = pixel_counts(&pred, &gt).unwrap();
        assert_eq!(c, PixelCounts { tp: 2, fp: 2, fn_: 2 });
        let (f1, iou, empty) = f1_iou(&c);
        assert!((f1 - 0.5).abs() < 1e-15 && (iou - 1.0 / 3.0).abs() < 1e-15 && !empty);
        let c = pixel_counts(&mask(4, 4, &[3, 7, 9]), &mask(4, 4, &[])).unwrap();
        assert_eq!(c, PixelCounts { tp: 0, fp: 3, fn_: 0 });
        assert_eq!(f1_iou(&c), (0.0, 0.0, false));
        assert!(pixel_counts(&mask(4, 4, &[]), &mask(2, 8, &[])).is_err());
    }

    #[test]
    fn empty_counts_are_defined() {
        assert_eq!(f1_iou(&PixelCounts::default()), (1.0, 1.0, true));
    }

    #[test]
    fn fpr_examples() {
        assert_eq!(fpr_pix(&mask(4, 4, &[])), 0.0);
        assert_eq!(fpr_pix(&mask(4, 4, &[1, 2, 3])), 0.1875);
        assert_eq!(fpr_pix(&mask(2, 2, &[0, 1, 2, 3])), 1.0);
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let scores = [0.1, 0.4, 0.35, 0.8, 0.4, 0.4, 0.9];
        let labels = [false, false, true, true, true, false, true];
        let mut acc = 0.0;
        let mut n = 0.0;
        for i in 0..7 {
            for j in 0..7 {
                if labels[i] && !labels[j] {
                    n += 1.0;
                    acc += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((roc_auc(&scores, &labels).unwrap() - acc / n).abs() < 1e-12);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), None);
    }
}
