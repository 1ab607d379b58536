//! Model-free localization baselines.
//!
//! * [`ela_map`]: error level analysis (resave and diff).
//! * [`coefficient_histograms`]: per-frequency dequantized DCT histograms.
//! * [`dq_block_scores`] / [`dq_localization_map`]: a double-quantization
//!   detector built from a global periodicity estimate and a per-block
//!   lattice-consistency posterior.
//!
//! All outputs are [`ProbMap`]s, exchanged with the eval module as 16-bit PGM.

mod dq;
mod ela;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{decode_to_coefficients, CodecError};
use crate::pnm::{read_pgm_any, write_pgm16, Gray16, PnmError};

pub use dq::{dq_block_scores, dq_block_scores_with, dq_localization_map, BlockScores, DqParams, PrimaryEstimate};
pub use ela::{ela_map, ela_map_pixels, DEFAULT_RESAVE_QUALITY};

#[derive(Debug, Error)]
pub enum ForensicsError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error("invalid probability map: {0}")]
    InvalidMap(String),
}

/// Pixel-level probability map, values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ProbMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, ForensicsError> {
        if width == 0 || height == 0 || values.len() != width as usize * height as usize {
            return Err(ForensicsError::InvalidMap(format!("{width}x{height} with {} values", values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ForensicsError::InvalidMap(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self { width, height, values: vec![0.0; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Quantizes to 16 bits, `v = round(p * 65535)`.
    pub fn to_gray16(&self) -> Gray16 {
        Gray16 {
            width: self.width,
            height: self.height,
            data: self.values.iter().map(|p| (p * 65535.0).round() as u16).collect(),
        }
    }

    pub fn from_gray16(g: &Gray16, maxval: u32) -> Result<Self, ForensicsError> {
        let m = f64::from(maxval.max(1));
        Self::new(g.width, g.height, g.data.iter().map(|&v| (f64::from(v) / m).min(1.0)).collect())
    }

    pub fn to_pgm16(&self) -> Vec<u8> {
        write_pgm16(&self.to_gray16())
    }

    /// Reads an 8- or 16-bit PGM, scaling by its maxval.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, ForensicsError> {
        let (g, maxval) = read_pgm_any(bytes)?;
        Self::from_gray16(&g, maxval)
    }
}

/// Per natural-order frequency: dequantized value -> count over the
/// luminance blocks that cover the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqHistogram {
    pub bins: Vec<BTreeMap<i32, u64>>,
    pub steps: [u16; 64],
    pub blocks: u64,
}

impl FreqHistogram {
    pub fn total(&self, freq: usize) -> u64 {
        self.bins[freq].values().sum()
    }
}

pub fn coefficient_histograms(bytes: &[u8]) -> Result<FreqHistogram, ForensicsError> {
    let img = decode_to_coefficients(bytes)?;
    let lum = img.luminance();
    let steps = *lum.table.values();
    let (bw, bh) = (img.width.div_ceil(8) as usize, img.height.div_ceil(8) as usize);
    let mut bins = vec![BTreeMap::new(); 64];
    for by in 0..bh {
        for bx in 0..bw {
            let block = lum.block(bx, by);
            for (f, bin) in bins.iter_mut().enumerate() {
                *bin.entry(i32::from(block[f]) * i32::from(steps[f])).or_insert(0u64) += 1;
            }
        }
    }
    Ok(FreqHistogram { bins, steps, blocks: (bw * bh) as u64 })
}
