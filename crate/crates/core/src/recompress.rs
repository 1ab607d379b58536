//! Recompression pipelines and the three-condition corpus materializer.
//!
//! * `Orig`: bytes copied unchanged.
//! * `Std`: each file re-encoded with standard tables at a quality drawn
//!   uniformly from `[qf_low, qf_high]`.
//! * `Real`: each file re-encoded with a luminance table sampled from a bank;
//!   chrominance uses the standard table at the sampled table's estimated
//!   quality.
//!
//! Every file draws from its own generator seeded by
//! [`file_seed`](crate::rng::file_seed)`(master, relative path)`, so outputs
//! do not depend on traversal order, thread count or sibling files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::bank::{list_files, sample_table, BankError, QtBank, Weighting};
use crate::codec::{decode, encode, CodecError, ColorModel, EncodeParams, PixelImage, Subsampling};
use crate::par::{self, Exec};
use crate::parse::has_jpeg_magic;
use crate::pnm::{has_pnm_magic, read_pnm, PnmError};
use crate::qt::{estimate_quality, fingerprint, standard_table, QtFingerprint, QualityFactor, StandardRole};
use crate::rng::{file_seed, SeededRng};

const PNG_MAGIC: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error)]
pub enum RecompressError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error("png: {0}")]
    Png(String),
    #[error("not an image (expected JPEG, PNM or PNG)")]
    NotAnImage,
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("invalid quality range {0}..={1}")]
    InvalidRange(u8, u8),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Orig,
    Std,
    Real,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::Orig => "orig",
            Condition::Std => "std",
            Condition::Real => "real",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().trim_end_matches('.') {
            "orig" => Some(Condition::Orig),
            "std" => Some(Condition::Std),
            "real" => Some(Condition::Real),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PipelineKind {
    Orig,
    Standard { qf_low: QualityFactor, qf_high: QualityFactor },
    Real { bank: QtBank, weighting: Weighting },
}

#[derive(Debug, Clone)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub master_seed: u64,
    pub subsampling: Subsampling,
    /// Recorded in the manifest sidecar only.
    pub bank_path: Option<PathBuf>,
}

impl PipelineSpec {
    pub fn orig(master_seed: u64) -> Self {
        Self { kind: PipelineKind::Orig, master_seed, subsampling: Subsampling::default(), bank_path: None }
    }

    pub fn standard(master_seed: u64, qf_low: u8, qf_high: u8) -> Result<Self, RecompressError> {
        let bad = || RecompressError::InvalidRange(qf_low, qf_high);
        let lo = QualityFactor::new(qf_low.into()).map_err(|_| bad())?;
        let hi = QualityFactor::new(qf_high.into()).map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        Ok(Self {
            kind: PipelineKind::Standard { qf_low: lo, qf_high: hi },
            master_seed,
            subsampling: Subsampling::default(),
            bank_path: None,
        })
    }

    pub fn real(master_seed: u64, bank: QtBank, weighting: Weighting) -> Result<Self, RecompressError> {
        if bank.is_empty() {
            return Err(BankError::EmptyBank.into());
        }
        Ok(Self {
            kind: PipelineKind::Real { bank, weighting },
            master_seed,
            subsampling: Subsampling::default(),
            bank_path: None,
        })
    }

    pub fn with_subsampling(mut self, s: Subsampling) -> Self {
        self.subsampling = s;
        self
    }

    pub fn with_bank_path(mut self, p: impl Into<PathBuf>) -> Self {
        self.bank_path = Some(p.into());
        self
    }

    pub fn condition(&self) -> Condition {
        match self.kind {
            PipelineKind::Orig => Condition::Orig,
            PipelineKind::Standard { .. } => Condition::Std,
            PipelineKind::Real { .. } => Condition::Real,
        }
    }
}

pub fn is_image(bytes: &[u8]) -> bool {
    has_jpeg_magic(bytes) || has_pnm_magic(bytes) || bytes.starts_with(PNG_MAGIC)
}

fn decode_png(bytes: &[u8]) -> Result<PixelImage, RecompressError> {
    let png_err = |e: png::DecodingError| RecompressError::Png(e.to_string());
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(png_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| RecompressError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(png_err)?;
    buf.truncate(info.buffer_size());
    let (color, data) = match info.color_type {
        png::ColorType::Grayscale => (ColorModel::Gray, buf),
        png::ColorType::GrayscaleAlpha => (ColorModel::Gray, buf.chunks_exact(2).map(|p| p[0]).collect()),
        png::ColorType::Rgb => (ColorModel::Rgb, buf),
        png::ColorType::Rgba => (ColorModel::Rgb, buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()),
        png::ColorType::Indexed => return Err(RecompressError::Png("unexpanded palette".into())),
    };
    Ok(PixelImage::new(info.width, info.height, color, data)?)
}

/// Decodes a JPEG, PNM or PNG source to pixels.
pub fn decode_source(bytes: &[u8]) -> Result<PixelImage, RecompressError> {
    if has_jpeg_magic(bytes) {
        Ok(decode(bytes)?)
    } else if has_pnm_magic(bytes) {
        Ok(read_pnm(bytes)?)
    } else if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else {
        Err(RecompressError::NotAnImage)
    }
}

/// Standard-QT recompression. Returns the output and the quality used.
pub fn recompress_standard(
    bytes: &[u8],
    seed: u64,
    qf_low: QualityFactor,
    qf_high: QualityFactor,
    subsampling: Subsampling,
) -> Result<(Vec<u8>, QualityFactor), RecompressError> {
    let img = decode_source(bytes)?;
    let q = draw_quality(&mut SeededRng::new(seed), qf_low, qf_high);
    let params = EncodeParams::new(standard_table(q, StandardRole::Luminance), standard_table(q, StandardRole::Chrominance))
        .subsampling(subsampling);
    Ok((encode(&img, &params)?, q))
}

pub fn draw_quality(rng: &mut SeededRng, lo: QualityFactor, hi: QualityFactor) -> QualityFactor {
    let q = rng.range_inclusive(lo.get().into(), hi.get().into());
    QualityFactor::new(q as i64).expect("drawn inside a valid range")
}

/// What a Real-QT recompression used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealChoice {
    pub fingerprint: QtFingerprint,
    pub chroma_quality: QualityFactor,
}

/// Real-QT recompression with a luminance table sampled from `bank`.
pub fn recompress_real(
    bytes: &[u8],
    seed: u64,
    bank: &QtBank,
    weighting: Weighting,
    subsampling: Subsampling,
) -> Result<(Vec<u8>, RealChoice), RecompressError> {
    let img = decode_source(bytes)?;
    let lum = sample_table(bank, &mut SeededRng::new(seed), weighting)?;
    let chroma_quality = estimate_quality(&lum, StandardRole::Luminance).quality;
    let params = EncodeParams::new(lum, standard_table(chroma_quality, StandardRole::Chrominance)).subsampling(subsampling);
    let out = encode(&img, &params)?;
    Ok((out, RealChoice { fingerprint: fingerprint(&lum), chroma_quality }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub input: String,
    /// Empty when the file failed.
    pub output: String,
    pub condition: Condition,
    /// `q=NN` for Std, `fp=<hex>;chroma_q=NN` for Real, empty for Orig.
    pub parameter: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    /// Sorted by input path.
    pub rows: Vec<ManifestRow>,
}

#[derive(Serialize)]
struct ManifestHeader<'a> {
    toolkit: &'a str,
    version: &'a str,
    condition: Condition,
    master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    qf_range: Option<[u8; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bank: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bank_tables: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weighting: Option<&'a str>,
    subsampling: &'a str,
    chroma_rule: &'a str,
    files: usize,
    failed: usize,
}

impl Manifest {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.error.is_empty()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["input", "output", "condition", "parameter", "seed", "error"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.input.as_str(),
                r.output.as_str(),
                r.condition.label(),
                r.parameter.as_str(),
                &r.seed.to_string(),
                r.error.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Sidecar echoing the pipeline settings.
    pub fn header_json(&self, spec: &PipelineSpec) -> String {
        let (qf_range, bank_tables, weighting) = match &spec.kind {
            PipelineKind::Orig => (None, None, None),
            PipelineKind::Standard { qf_low, qf_high } => (Some([qf_low.get(), qf_high.get()]), None, None),
            PipelineKind::Real { bank, weighting } => (None, Some(bank.distinct_count()), Some(weighting.label())),
        };
        let chroma_rule = match spec.kind {
            PipelineKind::Orig => "unchanged",
            PipelineKind::Standard { .. } => "standard table at the drawn quality",
            PipelineKind::Real { .. } => "standard table at the estimated quality of the sampled luminance table",
        };
        let h = ManifestHeader {
            toolkit: "qtkit",
            version: crate::VERSION,
            condition: spec.condition(),
            master_seed: spec.master_seed,
            qf_range,
            bank: spec.bank_path.as_ref().map(|p| p.display().to_string()),
            bank_tables,
            weighting,
            subsampling: spec.subsampling.label(),
            chroma_rule,
            files: self.rows.len(),
            failed: self.failed(),
        };
        serde_json::to_string_pretty(&h).expect("serializable") + "\n"
    }
}

/// Output path for a recompressed file: JPEG sources keep their relative
/// path, other sources get a `.jpg` extension.
fn output_rel(rel: &str, source_is_jpeg: bool) -> String {
    if source_is_jpeg {
        return rel.to_string();
    }
    let (dir, name) = rel.rsplit_once('/').map_or(("", rel), |(d, n)| (d, n));
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    if dir.is_empty() {
        format!("{stem}.jpg")
    } else {
        format!("{dir}/{stem}.jpg")
    }
}

struct Processed {
    output: Option<(String, Vec<u8>)>,
    parameter: String,
    error: String,
}

fn process(bytes: &[u8], rel: &str, seed: u64, spec: &PipelineSpec) -> Processed {
    let jpeg = has_jpeg_magic(bytes);
    let result = match &spec.kind {
        PipelineKind::Orig => Ok((bytes.to_vec(), String::new(), rel.to_string())),
        PipelineKind::Standard { qf_low, qf_high } => {
            recompress_standard(bytes, seed, *qf_low, *qf_high, spec.subsampling)
                .map(|(b, q)| (b, format!("q={}", q.get()), output_rel(rel, jpeg)))
        }
        PipelineKind::Real { bank, weighting } => recompress_real(bytes, seed, bank, *weighting, spec.subsampling)
            .map(|(b, c)| {
                (b, format!("fp={};chroma_q={}", c.fingerprint.as_str(), c.chroma_quality.get()), output_rel(rel, jpeg))
            }),
    };
    match result {
        Ok((out, parameter, out_rel)) => Processed { output: Some((out_rel, out)), parameter, error: String::new() },
        Err(e) => Processed { output: None, parameter: String::new(), error: e.to_string() },
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RecompressError> {
    let io = |source| RecompressError::Io { path: path.into(), source };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    std::fs::write(path, bytes).map_err(io)
}

/// Applies `spec` to every image file under `input` (recursively), mirroring
/// the tree into `output` and writing `manifest.csv` and `manifest.json`
/// there. Non-image files are ignored; per-file failures become manifest
/// rows with an error and the run continues.
pub fn materialize_condition(
    input: &Path,
    output: &Path,
    spec: &PipelineSpec,
    exec: Exec,
) -> Result<Manifest, RecompressError> {
    let files = list_files(input, true)?;
    let out_canon = output.canonicalize().ok();
    let files: Vec<(PathBuf, String)> = files
        .into_iter()
        .filter(|(abs, _)| out_canon.as_ref().is_none_or(|o| !abs.starts_with(o)))
        .collect();
    let rows = par::map(exec, &files, |(abs, rel)| -> Result<Option<ManifestRow>, RecompressError> {
        let seed = file_seed(spec.master_seed, rel);
        let bytes = match std::fs::read(abs) {
            Ok(b) => b,
            Err(e) => {
                return Ok(Some(ManifestRow {
                    input: rel.clone(),
                    output: String::new(),
                    condition: spec.condition(),
                    parameter: String::new(),
                    seed,
                    error: format!("unreadable: {e}"),
                }))
            }
        };
        if !is_image(&bytes) {
            return Ok(None);
        }
        let p = process(&bytes, rel, seed, spec);
        let out_rel = match p.output {
            Some((out_rel, out)) => {
                write_file(&output.join(&out_rel), &out)?;
                out_rel
            }
            None => String::new(),
        };
        Ok(Some(ManifestRow {
            input: rel.clone(),
            output: out_rel,
            condition: spec.condition(),
            parameter: p.parameter,
            seed,
            error: p.error,
        }))
    });
    let mut manifest = Manifest { rows: Vec::new() };
    for r in rows {
        if let Some(row) = r? {
            manifest.rows.push(row);
        }
    }
    manifest.rows.sort_by(|a, b| a.input.cmp(&b.input));
    write_file(&output.join("manifest.csv"), manifest.to_csv().as_bytes())?;
    write_file(&output.join("manifest.json"), manifest.header_json(spec).as_bytes())?;
    Ok(manifest)
}
