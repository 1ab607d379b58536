//! Toolkit for JPEG quantization-table forensics.
//!
//! * [`qt`]: quantization tables, IJG quality scaling, fingerprints.
//! * [`parse`]: marker-level scanning and DQT/SOF extraction.
//! * [`codec`]: baseline JPEG encoder and decoder (pixels and coefficients).
//! * [`bank`]: deduplicated table banks built from a corpus.
//! * [`recompress`]: Standard-QT / Real-QT recompression and corpus materialization.
//! * [`forensics`]: error level analysis and double-quantization baselines.
//! * [`eval`]: pixel-level localization metrics and report tables.
//!
//! Batch operations run on rayon when the `parallel` feature is enabled
//! (default) and fall back to sequential iteration otherwise; results are
//! identical either way.

pub mod bank;
pub mod codec;
pub mod eval;
pub mod fixtures;
pub mod forensics;
pub mod par;
pub mod parse;
pub mod pnm;
pub mod qt;
pub mod recompress;
pub mod rng;

pub use codec::{CoeffImage, ColorModel, EncodeParams, PixelImage, Subsampling};
pub use qt::{QtFingerprint, QualityFactor, QuantTable, StandardRole};

/// Version string written into manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
