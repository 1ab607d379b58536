//! Quantization tables.
//!
//! A [`QuantTable`] always stores its 64 steps in natural row-major order
//! (row = vertical frequency). Zigzag order only exists at the bitstream
//! boundary, see [`zigzag_order`] and [`natural_order`].

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QtError {
    #[error("quality factor {0} outside [1, 100]")]
    QualityOutOfRange(i64),
    #[error("quantization step {value} at index {index} is zero")]
    ZeroStep { index: usize, value: u16 },
    #[error("step {value} at index {index} does not fit 8-bit precision")]
    StepTooLarge { index: usize, value: u16 },
    #[error("expected 64 steps, got {0}")]
    WrongLength(usize),
}

/// Zigzag position -> natural index.
pub(crate) const ZIGZAG_NATURAL: [u8; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

const fn invert(perm: &[u8; 64]) -> [u8; 64] {
    let mut out = [0u8; 64];
    let mut i = 0;
    while i < 64 {
        out[perm[i] as usize] = i as u8;
        i += 1;
    }
    out
}

/// Natural index -> zigzag position.
const NATURAL: [u8; 64] = invert(&ZIGZAG_NATURAL);

/// Maps zigzag position to natural row-major index.
pub fn zigzag_order() -> [usize; 64] {
    ZIGZAG_NATURAL.map(usize::from)
}

/// Maps natural row-major index to zigzag position. Inverse of [`zigzag_order`].
pub fn natural_order() -> [usize; 64] {
    NATURAL.map(usize::from)
}

/// Reorders 64 values read in zigzag order into natural order.
pub fn zigzag_to_natural<T: Copy + Default>(zz: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (pos, &nat) in ZIGZAG_NATURAL.iter().enumerate() {
        out[nat as usize] = zz[pos];
    }
    out
}

/// Reorders 64 natural-order values into zigzag (bitstream) order.
pub fn natural_to_zigzag<T: Copy + Default>(nat: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (pos, &n) in ZIGZAG_NATURAL.iter().enumerate() {
        out[pos] = nat[n as usize];
    }
    out
}

/// IJG reference luminance table (JPEG Annex K.1).
#[rustfmt::skip]
pub const BASE_LUMINANCE: [u16; 64] = [
    16,  11,  10,  16,  24,  40,  51,  61,
    12,  12,  14,  19,  26,  58,  60,  55,
    14,  13,  16,  24,  40,  57,  69,  56,
    14,  17,  22,  29,  51,  87,  80,  62,
    18,  22,  37,  56,  68, 109, 103,  77,
    24,  35,  55,  64,  81, 104, 113,  92,
    49,  64,  78,  87, 103, 121, 120, 101,
    72,  92,  95,  98, 112, 100, 103,  99,
];

/// IJG reference chrominance table (JPEG Annex K.2).
#[rustfmt::skip]
pub const BASE_CHROMINANCE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    Bits8,
    Bits16,
}

impl Precision {
    pub fn bits(self) -> u8 {
        match self {
            Precision::Bits8 => 8,
            Precision::Bits16 => 16,
        }
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            8 => Some(Precision::Bits8),
            16 => Some(Precision::Bits16),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TableRole {
    Luminance,
    Chrominance,
    #[default]
    Unspecified,
}

/// Which IJG base matrix a standard table derives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StandardRole {
    Luminance,
    Chrominance,
}

impl StandardRole {
    fn base(self) -> &'static [u16; 64] {
        match self {
            StandardRole::Luminance => &BASE_LUMINANCE,
            StandardRole::Chrominance => &BASE_CHROMINANCE,
        }
    }
}

/// An 8x8 matrix of quantization steps in natural order.
///
/// Equality and hashing consider only precision and values; the role is a
/// label carried along for reporting.
#[derive(Debug, Clone, Copy)]
pub struct QuantTable {
    values: [u16; 64],
    precision: Precision,
    role: TableRole,
}

impl PartialEq for QuantTable {
    fn eq(&self, other: &Self) -> bool {
        self.precision == other.precision && self.values == other.values
    }
}

impl Eq for QuantTable {}

impl std::hash::Hash for QuantTable {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.precision.hash(state);
        self.values.hash(state);
    }
}

impl QuantTable {
    /// Builds a table from natural-order steps.
    pub fn new(values: [u16; 64], precision: Precision) -> Result<Self, QtError> {
        for (index, &value) in values.iter().enumerate() {
            if value == 0 {
                return Err(QtError::ZeroStep { index, value });
            }
            if precision == Precision::Bits8 && value > 255 {
                return Err(QtError::StepTooLarge { index, value });
            }
        }
        Ok(Self {
            values,
            precision,
            role: TableRole::Unspecified,
        })
    }

    /// Builds a table choosing the narrowest precision that holds every step.
    pub fn with_min_precision(values: [u16; 64]) -> Result<Self, QtError> {
        let precision = if values.iter().all(|&v| v <= 255) {
            Precision::Bits8
        } else {
            Precision::Bits16
        };
        Self::new(values, precision)
    }

    pub fn from_slice(values: &[u16], precision: Precision) -> Result<Self, QtError> {
        let arr: [u16; 64] = values
            .try_into()
            .map_err(|_| QtError::WrongLength(values.len()))?;
        Self::new(arr, precision)
    }

    /// Builds a table from steps given in zigzag order.
    pub fn from_zigzag(zz: [u16; 64], precision: Precision) -> Result<Self, QtError> {
        Self::new(zigzag_to_natural(&zz), precision)
    }

    pub fn with_role(mut self, role: TableRole) -> Self {
        self.role = role;
        self
    }

    pub fn values(&self) -> &[u16; 64] {
        &self.values
    }

    pub fn zigzag_values(&self) -> [u16; 64] {
        natural_to_zigzag(&self.values)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn role(&self) -> TableRole {
        self.role
    }

    /// Step at (row, col) in natural order.
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.values[row * 8 + col]
    }

    pub fn max_step(&self) -> u16 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    pub fn fingerprint(&self) -> QtFingerprint {
        fingerprint(self)
    }

    /// Eight lines of eight space-separated integers, natural order.
    pub fn render_grid(&self) -> String {
        let mut out = String::with_capacity(64 * 4);
        for row in self.values.chunks(8) {
            let line: Vec<String> = row.iter().map(u16::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Quality factor in `[1, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QualityFactor(u8);

impl QualityFactor {
    pub fn new(q: i64) -> Result<Self, QtError> {
        if (1..=100).contains(&q) {
            Ok(Self(q as u8))
        } else {
            Err(QtError::QualityOutOfRange(q))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn all() -> impl DoubleEndedIterator<Item = QualityFactor> {
        (1..=100u8).map(QualityFactor)
    }
}

impl fmt::Display for QualityFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The IJG/libjpeg table for quality `q`.
///
/// `scale = 5000 / q` below 50, `200 - 2q` otherwise; each step is
/// `(base * scale + 50) / 100` clamped to `[1, 255]`.
pub fn standard_table(q: QualityFactor, role: StandardRole) -> QuantTable {
    let q = u32::from(q.get());
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let base = role.base();
    let values = std::array::from_fn(|i| {
        let v = (u32::from(base[i]) * scale + 50) / 100;
        v.clamp(1, 255) as u16
    });
    let table_role = match role {
        StandardRole::Luminance => TableRole::Luminance,
        StandardRole::Chrominance => TableRole::Chrominance,
    };
    QuantTable {
        values,
        precision: Precision::Bits8,
        role: table_role,
    }
}

/// Lowercase hex digest identifying a table by precision and values.
///
/// SHA-256 over one byte holding the precision in bits (8 or 16) followed by
/// the 64 steps in natural order as big-endian `u16`; the first 16 bytes of the
/// digest are kept (32 hex characters).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QtFingerprint(String);

impl QtFingerprint {
    pub const HEX_LEN: usize = 32;

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts a stored digest if it is well formed.
    pub fn parse(s: &str) -> Option<Self> {
        let ok = s.len() == Self::HEX_LEN
            && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| Self(s.to_owned()))
    }
}

impl fmt::Display for QtFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn fingerprint(t: &QuantTable) -> QtFingerprint {
    let mut hasher = Sha256::new();
    hasher.update([t.precision.bits()]);
    for v in &t.values {
        hasher.update(v.to_be_bytes());
    }
    let digest = hasher.finalize();
    QtFingerprint(hex::encode(&digest[..QtFingerprint::HEX_LEN / 2]))
}

/// Closest standard quality for a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QualityEstimate {
    pub quality: QualityFactor,
    /// Sum of absolute step differences; the mean distance is this over 64.
    pub abs_diff_sum: u32,
}

impl QualityEstimate {
    pub fn distance(&self) -> f64 {
        f64::from(self.abs_diff_sum) / 64.0
    }

    pub fn exact(&self) -> bool {
        self.abs_diff_sum == 0
    }
}

fn abs_diff_sum(a: &[u16; 64], b: &[u16; 64]) -> u32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| u32::from(x.abs_diff(y)))
        .sum()
}

/// Argmin over q of the mean absolute step difference to `standard_table(q)`.
/// Ties go to the larger q.
pub fn estimate_quality(t: &QuantTable, role: StandardRole) -> QualityEstimate {
    let mut best: Option<QualityEstimate> = None;
    for q in QualityFactor::all() {
        let d = abs_diff_sum(t.values(), standard_table(q, role).values());
        if best.is_none_or(|b| d <= b.abs_diff_sum) {
            best = Some(QualityEstimate {
                quality: q,
                abs_diff_sum: d,
            });
        }
    }
    best.expect("quality range is non-empty")
}

/// The largest q whose standard table equals `t` exactly.
pub fn is_standard(t: &QuantTable, role: StandardRole) -> Option<QualityFactor> {
    if t.precision != Precision::Bits8 {
        return None;
    }
    QualityFactor::all()
        .rev()
        .find(|&q| standard_table(q, role).values == t.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qf(q: i64) -> QualityFactor {
        QualityFactor::new(q).unwrap()
    }

    /// Walks the anti-diagonals of an 8x8 block, alternating direction.
    fn zigzag_walk() -> Vec<usize> {
        let mut out = Vec::new();
        for s in 0..15usize {
            let cells: Vec<(usize, usize)> = (0..8)
                .filter_map(|r| s.checked_sub(r).filter(|&c| c < 8).map(|c| (r, c)))
                .collect();
            // even diagonals run bottom-left to top-right
            if s % 2 == 0 {
                out.extend(cells.iter().rev().map(|&(r, c)| r * 8 + c));
            } else {
                out.extend(cells.iter().map(|&(r, c)| r * 8 + c));
            }
        }
        out
    }

    #[test]
    fn zigzag_matches_walk() {
        assert_eq!(zigzag_order().to_vec(), zigzag_walk());
        assert_eq!(zigzag_order()[0], 0);
        assert_eq!(zigzag_order()[1], 1);
        assert_eq!(zigzag_order()[2], 8);
        assert_eq!(zigzag_order()[63], 63);
    }

    #[test]
    fn zigzag_natural_are_inverse() {
        let zz = zigzag_order();
        let nat = natural_order();
        for i in 0..64 {
            assert_eq!(nat[zz[i]], i);
            assert_eq!(zz[nat[i]], i);
        }
    }

    #[test]
    fn quality_bounds() {
        assert!(QualityFactor::new(0).is_err());
        assert!(QualityFactor::new(101).is_err());
        assert_eq!(QualityFactor::new(100).unwrap().get(), 100);
    }

    #[test]
    fn q50_is_base_matrix() {
        let t = standard_table(qf(50), StandardRole::Luminance);
        assert_eq!(t.values(), &BASE_LUMINANCE);
        assert_eq!(t.max_step(), 121);
    }

    #[test]
    fn q90_max_is_24() {
        assert_eq!(standard_table(qf(90), StandardRole::Luminance).max_step(), 24);
    }

    #[test]
    fn q100_is_all_ones() {
        for role in [StandardRole::Luminance, StandardRole::Chrominance] {
            assert!(standard_table(qf(100), role).values().iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn invalid_tables_rejected() {
        let mut v = [1u16; 64];
        v[5] = 0;
        assert_eq!(
            QuantTable::new(v, Precision::Bits8),
            Err(QtError::ZeroStep { index: 5, value: 0 })
        );
        let mut v = [1u16; 64];
        v[63] = 256;
        assert!(QuantTable::new(v, Precision::Bits8).is_err());
        assert!(QuantTable::new(v, Precision::Bits16).is_ok());
        assert_eq!(
            QuantTable::with_min_precision(v).unwrap().precision(),
            Precision::Bits16
        );
    }

    #[test]
    fn fingerprint_ignores_role() {
        let t = QuantTable::new(BASE_LUMINANCE, Precision::Bits8).unwrap();
        let a = t.with_role(TableRole::Luminance).fingerprint();
        let b = t.with_role(TableRole::Chrominance).fingerprint();
        assert_eq!(a, b);
        assert_eq!(a.as_str().len(), QtFingerprint::HEX_LEN);
        assert!(QtFingerprint::parse(a.as_str()).is_some());
    }

    #[test]
    fn fingerprint_covers_precision() {
        let a = QuantTable::new(BASE_LUMINANCE, Precision::Bits8).unwrap();
        let b = QuantTable::new(BASE_LUMINANCE, Precision::Bits16).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn standard_luminance_fingerprints_distinct() {
        let mut seen = std::collections::HashSet::new();
        for q in QualityFactor::all() {
            seen.insert(standard_table(q, StandardRole::Luminance).fingerprint());
        }
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn estimate_round_trip() {
        for q in [75, 30] {
            let e = estimate_quality(&standard_table(qf(q), StandardRole::Luminance), StandardRole::Luminance);
            assert_eq!(e.quality.get(), q as u8);
            assert!(e.exact());
            assert_eq!(e.distance(), 0.0);
        }
    }

    #[test]
    fn estimate_perturbed_q90() {
        let mut v = *standard_table(qf(90), StandardRole::Luminance).values();
        v[10] += 1;
        let t = QuantTable::new(v, Precision::Bits8).unwrap();
        // brute-force scan over every candidate
        let dists: Vec<(u8, u32)> = (1..=100)
            .map(|q| {
                let s = standard_table(qf(q), StandardRole::Luminance);
                let d = s.values().iter().zip(&v).map(|(&a, &b)| (a as i64 - b as i64).unsigned_abs() as u32).sum();
                (q as u8, d)
            })
            .collect();
        let min = dists.iter().map(|d| d.1).min().unwrap();
        let q_best = dists.iter().filter(|d| d.1 == min).map(|d| d.0).max().unwrap();
        assert_eq!((q_best, min), (90, 1));

        let e = estimate_quality(&t, StandardRole::Luminance);
        assert_eq!(e.quality.get(), 90);
        assert_eq!(e.distance(), 1.0 / 64.0);
        assert!(!e.exact());
    }

    #[test]
    fn is_standard_cases() {
        let t60 = standard_table(qf(60), StandardRole::Luminance);
        assert_eq!(is_standard(&t60, StandardRole::Luminance), Some(qf(60)));
        let ones = QuantTable::new([1; 64], Precision::Bits8).unwrap();
        assert_eq!(is_standard(&ones, StandardRole::Luminance), Some(qf(100)));
        let mut v = BASE_LUMINANCE;
        assert_eq!(v[63], 99);
        v[63] = 98;
        let t = QuantTable::new(v, Precision::Bits8).unwrap();
        assert_eq!(is_standard(&t, StandardRole::Luminance), None);
    }

    #[test]
    fn round_trip_all_qualities() {
        for role in [StandardRole::Luminance, StandardRole::Chrominance] {
            for q in QualityFactor::all() {
                let t = standard_table(q, role);
                let back = is_standard(&t, role).expect("standard table");
                assert!(back >= q);
                assert_eq!(standard_table(back, role), t);
                assert_eq!(estimate_quality(&t, role).abs_diff_sum, 0);
            }
        }
    }

    #[test]
    fn monotone_in_quality() {
        for role in [StandardRole::Luminance, StandardRole::Chrominance] {
            for q in 1..100 {
                let lo = standard_table(qf(q), role);
                let hi = standard_table(qf(q + 1), role);
                assert!(lo.values().iter().zip(hi.values()).all(|(a, b)| a >= b));
            }
        }
    }

    #[test]
    fn grid_rendering() {
        let g = standard_table(qf(50), StandardRole::Luminance).render_grid();
        let lines: Vec<&str> = g.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[0], "16 11 10 16 24 40 51 61");
        assert_eq!(lines[7], "72 92 95 98 112 100 103 99");
    }
}
