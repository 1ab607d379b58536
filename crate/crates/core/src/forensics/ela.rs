use crate::codec::{decode, encode, PixelImage, Subsampling};
use crate::fixtures::std_params;
use crate::qt::QualityFactor;

use super::{ForensicsError, ProbMap};

pub const DEFAULT_RESAVE_QUALITY: u8 = 75;

/// Error level analysis: resave at `resave_q` (4:4:4), take the absolute
/// difference of 8-bit luma and normalize by its 99th percentile (nearest
/// rank), clamped to `[0, 1]`.
pub fn ela_map(bytes: &[u8], resave_q: QualityFactor) -> Result<ProbMap, ForensicsError> {
    ela_map_pixels(&decode(bytes)?, resave_q)
}

/// [`ela_map`] on already decoded pixels.
pub fn ela_map_pixels(img: &PixelImage, resave_q: QualityFactor) -> Result<ProbMap, ForensicsError> {
    let resaved = decode(&encode(img, &std_params(resave_q.get()).subsampling(Subsampling::S444))?)?;
    let diff: Vec<f64> = img.luma().iter().zip(resaved.luma()).map(|(&a, b)| f64::from(a.abs_diff(b))).collect();
    let mut sorted = diff.clone();
    sorted.sort_by(f64::total_cmp);
    let rank = ((sorted.len() as f64 * 0.99).ceil() as usize).clamp(1, sorted.len());
    let mut scale = sorted[rank - 1];
    if scale <= 0.0 {
        scale = *sorted.last().expect("non-empty image");
    }
    if scale <= 0.0 {
        return Ok(ProbMap::zeros(img.width(), img.height()));
    }
    ProbMap::new(img.width(), img.height(), diff.iter().map(|d| (d / scale).min(1.0)).collect())
}
