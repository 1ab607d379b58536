//! Double-quantization detector.
//!
//! A coefficient first quantized with step `s1` and then requantized with
//! step `s2` lands on bin `k` with multiplicity
//! `n(k) = #{m : round(m * s1 / s2) = k}`, so the histogram of the second
//! quantization is a smooth envelope modulated by `n`. For each selected
//! frequency:
//!
//! 1. Fold the histogram of quantized values onto `|k| >= 1` and fit a
//!    smooth envelope (Poisson regression, log-quadratic in `k`).
//! 2. For every candidate `s1`, project the residual onto the envelope times
//!    the relative multiplicity `n(k) / mean(n) - 1`, with the template made
//!    orthogonal to the envelope fit, and divide by the projection's
//!    Poisson standard deviation. The largest z-score names the primary
//!    step. The frequency is ignored when z is below `min_z` or the fitted
//!    modulation amplitude is below `min_amplitude`.
//! 3. A coefficient at bin `k` has likelihood ratio `L = n(k) / mean(n)`
//!    between double and single compression, hence tamper posterior
//!    `1 / (1 + L)`. Zero coefficients are neutral (0.5).
//!
//! Block scores are the mean posterior over detected frequencies, box
//! filtered over the block grid (`smoothing_radius`, default 2 = 5x5 blocks)
//! and min-max normalized. When no frequency is detected or the spread is below
//! [`DEGENERATE_SPREAD`] the grid is all zeros and flagged degenerate.

use crate::codec::decode_to_coefficients;
use crate::par::{self, Exec};
use crate::qt::ZIGZAG_NATURAL;

use super::{ForensicsError, ProbMap};

pub const DEGENERATE_SPREAD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct DqParams {
    /// Zigzag positions analyzed.
    pub frequencies: Vec<usize>,
    /// Largest candidate primary step.
    pub max_primary: u16,
    /// Half-width of the uniform rounding noise added between the two
    /// quantizations, in DCT units.
    pub noise: f64,
    /// Detection threshold on the periodicity z-score.
    pub min_z: f64,
    /// Histogram range `1..=max_bin` after folding.
    pub max_bin: usize,
    /// Detection threshold on the fitted modulation amplitude (1 = every
    /// coefficient double-quantized).
    pub min_amplitude: f64,
    /// Box-filter radius applied to the block grid before normalization.
    pub smoothing_radius: usize,
}

impl Default for DqParams {
    fn default() -> Self {
        Self {
            frequencies: (1..=9).collect(),
            max_primary: 128,
            noise: 1.0,
            min_z: 6.0,
            max_bin: 64,
            min_amplitude: 0.2,
            smoothing_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryEstimate {
    pub zigzag: usize,
    pub secondary: u16,
    /// Best candidate, `None` when below the detection threshold.
    pub primary: Option<u16>,
    pub z: f64,
    pub amplitude: f64,
}

/// One score per 8x8 luminance block over a `ceil(H/8)` x `ceil(W/8)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockScores {
    pub width: u32,
    pub height: u32,
    pub cols: usize,
    pub rows: usize,
    pub scores: Vec<f64>,
    pub degenerate: bool,
    pub estimates: Vec<PrimaryEstimate>,
}

impl BlockScores {
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Nearest-neighbor upsampling to the image size.
    pub fn to_prob_map(&self) -> ProbMap {
        let values = (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .map(|(x, y)| self.get(x as usize / 8, y as usize / 8))
            .collect();
        ProbMap::new(self.width, self.height, values).expect("scores are normalized")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,score\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                s.push_str(&format!("{r},{c},{:.6}\n", self.get(c, r)));
            }
        }
        s
    }
}

/// Multiplicity of bins `0..=max_bin` for primary `s1`, secondary `s2`,
/// with uniform noise of half-width `w` before the second rounding.
fn multiplicity(s1: u16, s2: u16, w: f64, max_bin: usize) -> Vec<f64> {
    let (s1, s2) = (f64::from(s1), f64::from(s2));
    (0..=max_bin)
        .map(|a| {
            let lo = (a as f64 - 0.5) * s2;
            let hi = (a as f64 + 0.5) * s2;
            let m_lo = ((lo - w) / s1).floor() as i64;
            let m_hi = ((hi + w) / s1).ceil() as i64;
            (m_lo..=m_hi)
                .map(|m| {
                    let c = m as f64 * s1;
                    let overlap = (c + w).min(hi) - (c - w).max(lo);
                    overlap.max(0.0) / (2.0 * w)
                })
                .sum()
        })
        .collect()
}

/// Poisson regression of `hist[1..]` on `[1, t, t^2]`, `t = a / len`, by
/// iteratively reweighted least squares. Returns the fitted means (index 0
/// unused) and the design matrix, or `None` if the system is singular.
fn fit_envelope(hist: &[f64]) -> Option<(Vec<f64>, Vec<[f64; 3]>)> {
    let n = hist.len() - 1;
    let x: Vec<[f64; 3]> = (0..=n)
        .map(|a| {
            let t = a as f64 / n as f64;
            [1.0, t, t * t]
        })
        .collect();
    // start from least squares on log(h + 0.5)
    let mut beta = solve_weighted(&x, &(0..=n).map(|a| (hist[a] + 0.5).ln()).collect::<Vec<_>>(), &vec![1.0; n + 1])?;
    let mut mu = vec![0.0; n + 1];
    for _ in 0..50 {
        for a in 1..=n {
            mu[a] = dot(&x[a], &beta).clamp(-700.0, 700.0).exp();
        }
        // working response z = eta + (h - mu) / mu, weights mu
        let z: Vec<f64> = (0..=n).map(|a| if a == 0 { 0.0 } else { dot(&x[a], &beta) + (hist[a] - mu[a]) / mu[a].max(1e-12) }).collect();
        let next = solve_weighted(&x, &z, &mu)?;
        let delta = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if delta < 1e-10 {
            break;
        }
    }
    for a in 1..=n {
        mu[a] = dot(&x[a], &beta).clamp(-700.0, 700.0).exp();
    }
    Some((mu, x))
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Weighted least squares over rows `1..`; solves the 3x3 normal equations.
fn solve_weighted(x: &[[f64; 3]], y: &[f64], w: &[f64]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for a in 1..x.len() {
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += w[a] * x[a][i] * x[a][j];
            }
            m[i][3] += w[a] * x[a][i] * y[a];
        }
    }
    gauss_solve(m)
}

fn gauss_solve(mut m: [[f64; 4]; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        let pivot_row = m[col];
        for (row, r) in m.iter_mut().enumerate() {
            if row != col {
                let f = r[col] / pivot_row[col];
                for (x, p) in r.iter_mut().zip(&pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

struct Detection {
    primary: Option<u16>,
    z: f64,
    /// Fitted share of double-quantized coefficients.
    amplitude: f64,
    /// Likelihood ratio double/single per folded bin (index 0 unused).
    ratio: Vec<f64>,
}

fn detect(hist: &[f64], s2: u16, p: &DqParams) -> Detection {
    let none = Detection { primary: None, z: 0.0, amplitude: 0.0, ratio: Vec::new() };
    // trim to the populated range; a handful of bins carries no periodicity
    let Some(last) = (1..hist.len()).rev().find(|&a| hist[a] > 0.0) else {
        return none;
    };
    let total: f64 = hist[1..=last].iter().sum();
    if last < MIN_BINS || total < MIN_COUNT {
        return none;
    }
    let hist = &hist[..=last];
    let Some((env, x)) = fit_envelope(hist) else {
        return none;
    };
    let resid: Vec<f64> = (0..=last).map(|a| if a == 0 { 0.0 } else { hist[a] - env[a] }).collect();

    // projection onto the fit's tangent space, weighted by the envelope
    let mut xtwx = [[0.0f64; 4]; 3];
    for a in 1..=last {
        for i in 0..3 {
            for j in 0..3 {
                xtwx[i][j] += env[a] * x[a][i] * x[a][j];
            }
        }
    }

    let mut best = none;
    for s1 in 1..=p.max_primary {
        if s1 == s2 {
            continue;
        }
        let n = multiplicity(s1, s2, p.noise, last);
        let mean_n = f64::from(s2) / f64::from(s1);
        let ratio: Vec<f64> = n.iter().map(|v| v / mean_n).collect();
        let g: Vec<f64> = (0..=last).map(|a| if a == 0 { 0.0 } else { env[a] * (ratio[a] - 1.0) }).collect();
        // u = g - X (X'WX)^-1 X'W g; the residual is orthogonal to X, so
        // sum(g * r) = sum(u * r) and Var = sum(env * u^2) under the null.
        let mut m = xtwx;
        for i in 0..3 {
            m[i][3] = (1..=last).map(|a| env[a] * x[a][i] * g[a]).sum();
        }
        let Some(c) = gauss_solve(m) else { continue };
        let u: Vec<f64> = (0..=last).map(|a| if a == 0 { 0.0 } else { g[a] - dot(&x[a], &c) }).collect();
        let var: f64 = (1..=last).map(|a| env[a] * u[a] * u[a]).sum();
        let energy: f64 = (1..=last).map(|a| u[a] * u[a]).sum();
        if var <= 1e-9 || energy <= 1e-9 {
            continue;
        }
        let proj: f64 = (1..=last).map(|a| u[a] * resid[a]).sum();
        let z = proj / var.sqrt();
        if z > best.z {
            best = Detection { primary: Some(s1), z, amplitude: proj / energy, ratio };
        }
    }
    if best.z < p.min_z || best.amplitude < p.min_amplitude {
        best.primary = None;
    }
    best
}

/// Fewest populated bins and coefficients for a periodicity estimate.
const MIN_BINS: usize = 4;
const MIN_COUNT: f64 = 50.0;

pub fn dq_block_scores(bytes: &[u8]) -> Result<BlockScores, ForensicsError> {
    dq_block_scores_with(bytes, &DqParams::default())
}

pub fn dq_block_scores_with(bytes: &[u8], p: &DqParams) -> Result<BlockScores, ForensicsError> {
    let img = decode_to_coefficients(bytes)?;
    let lum = img.luminance();
    let steps = *lum.table.values();
    let (cols, rows) = (img.width.div_ceil(8) as usize, img.height.div_ceil(8) as usize);
    let blocks: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (c, r))).collect();
    let max_bin = p.max_bin.max(2);

    let freqs: Vec<usize> = p.frequencies.iter().copied().filter(|&z| (1..64).contains(&z)).collect();
    let detections: Vec<(usize, Detection)> = par::map(Exec::default(), &freqs, |&z| {
        let f = ZIGZAG_NATURAL[z] as usize;
        let mut hist = vec![0.0f64; max_bin + 1];
        for &(c, r) in &blocks {
            let a = lum.block(c, r)[f].unsigned_abs() as usize;
            if (1..=max_bin).contains(&a) {
                hist[a] += 1.0;
            }
        }
        (f, detect(&hist, steps[f], p))
    });

    let estimates = freqs
        .iter()
        .zip(&detections)
        .map(|(&z, (f, d))| PrimaryEstimate { zigzag: z, secondary: steps[*f], primary: d.primary, z: d.z, amplitude: d.amplitude })
        .collect();
    let used: Vec<&(usize, Detection)> = detections.iter().filter(|(_, d)| d.primary.is_some()).collect();

    let mut scores: Vec<f64> = blocks
        .iter()
        .map(|&(c, r)| {
            if used.is_empty() {
                return 0.0;
            }
            let block = lum.block(c, r);
            let sum: f64 = used
                .iter()
                .map(|(f, d)| {
                    let a = block[*f].unsigned_abs() as usize;
                    if a == 0 || a >= d.ratio.len() {
                        0.5
                    } else {
                        1.0 / (1.0 + d.ratio[a])
                    }
                })
                .sum();
            sum / used.len() as f64
        })
        .collect();

    if p.smoothing_radius > 0 {
        scores = box_filter(&scores, cols, rows, p.smoothing_radius);
    }
    let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let degenerate = used.is_empty() || hi - lo < DEGENERATE_SPREAD;
    if degenerate {
        scores.iter_mut().for_each(|s| *s = 0.0);
    } else {
        scores.iter_mut().for_each(|s| *s = ((*s - lo) / (hi - lo)).clamp(0.0, 1.0));
    }
    Ok(BlockScores { width: img.width, height: img.height, cols, rows, scores, degenerate, estimates })
}

fn box_filter(v: &[f64], cols: usize, rows: usize, r: usize) -> Vec<f64> {
    (0..rows)
        .flat_map(|y| (0..cols).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (mut s, mut n) = (0.0, 0.0);
            for yy in y.saturating_sub(r)..=(y + r).min(rows - 1) {
                for xx in x.saturating_sub(r)..=(x + r).min(cols - 1) {
                    s += v[yy * cols + xx];
                    n += 1.0;
                }
            }
            s / n
        })
        .collect()
}

pub fn dq_localization_map(bytes: &[u8], p: &DqParams) -> Result<ProbMap, ForensicsError> {
    Ok(dq_block_scores_with(bytes, p)?.to_prob_map())
}
