//! 8x8 type-II DCT with JPEG (orthonormal) scaling.
//!
//! Both directions are plain separable matrix products in `f64` with a fixed
//! summation order. The cosine basis is built from literal constants rather
//! than `f64::cos` so the output does not depend on the platform libm.

use crate::qt::QuantTable;

/// cos(k * pi / 16) for k = 0..=8.
const COS16: [f64; 9] = [
    1.0,
    0.980_785_280_403_230_4,
    0.923_879_532_511_286_7,
    0.831_469_612_302_545_2,
    std::f64::consts::FRAC_1_SQRT_2,
    0.555_570_233_019_602_2,
    0.382_683_432_365_089_8,
    0.195_090_322_016_128_3,
    0.0,
];

/// cos(m * pi / 16) for any non-negative m, by symmetry.
const fn cos16(m: usize) -> f64 {
    let m = m % 32;
    if m <= 8 {
        COS16[m]
    } else if m <= 16 {
        -COS16[16 - m]
    } else if m <= 24 {
        -COS16[m - 16]
    } else {
        COS16[32 - m]
    }
}

/// basis[u][x] = c(u) / 2 * cos((2x + 1) u pi / 16), c(0) = 1/sqrt(2).
const BASIS: [[f64; 8]; 8] = {
    let mut b = [[0.0; 8]; 8];
    let mut u = 0;
    while u < 8 {
        let mut x = 0;
        while x < 8 {
            let c = cos16((2 * x + 1) * u);
            b[u][x] = if u == 0 { c * COS16[4] * 0.5 } else { c * 0.5 };
            x += 1;
        }
        u += 1;
    }
    b
};

/// Forward DCT of a level-shifted block (natural order in and out).
pub fn fdct_8x8(block: &[f64; 64]) -> [f64; 64] {
    // rows: tmp[y][u] = sum_x f[y][x] * B[u][x]
    let mut tmp = [0.0f64; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for x in 0..8 {
                s += block[y * 8 + x] * BASIS[u][x];
            }
            tmp[y * 8 + u] = s;
        }
    }
    // columns: out[v][u] = sum_y B[v][y] * tmp[y][u]
    let mut out = [0.0f64; 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut s = 0.0;
            for y in 0..8 {
                s += BASIS[v][y] * tmp[y * 8 + u];
            }
            out[v * 8 + u] = s;
        }
    }
    out
}

/// Inverse DCT; returns level-shifted samples.
pub fn idct_8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    let mut tmp = [0.0f64; 64];
    for v in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for u in 0..8 {
                s += coeffs[v * 8 + u] * BASIS[u][x];
            }
            tmp[v * 8 + x] = s;
        }
    }
    let mut out = [0.0f64; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut s = 0.0;
            for v in 0..8 {
                s += BASIS[v][y] * tmp[v * 8 + x];
            }
            out[y * 8 + x] = s;
        }
    }
    out
}

const CONST_BITS: u32 = 13;
const PASS1_BITS: u32 = 2;
const FIX_0_298631336: i64 = 2446;
const FIX_0_390180644: i64 = 3196;
const FIX_0_541196100: i64 = 4433;
const FIX_0_765366865: i64 = 6270;
const FIX_0_899976223: i64 = 7373;
const FIX_1_175875602: i64 = 9633;
const FIX_1_501321110: i64 = 12299;
const FIX_1_847759065: i64 = 15137;
const FIX_1_961570560: i64 = 16069;
const FIX_2_053119869: i64 = 16819;
const FIX_2_562915447: i64 = 20995;
const FIX_3_072711026: i64 = 25172;

fn descale(x: i64, n: u32) -> i64 {
    (x + (1 << (n - 1))) >> n
}

/// libjpeg's sample range limiting: the centered value is masked to 10 bits
/// and clamped, so in-range overshoots saturate and wild values wrap.
fn range_limit(v: i64) -> u8 {
    match (v & 1023) as i32 {
        i @ 0..=127 => (i + 128) as u8,
        128..=511 => 255,
        512..=895 => 0,
        i => (i - 896) as u8,
    }
}

/// One 1-D pass of the Loeffler-Ligtenberg-Moschytz IDCT on `x`, returning
/// the eight outputs before descaling.
fn islow_1d(x: [i64; 8]) -> [i64; 8] {
    let z1 = (x[2] + x[6]) * FIX_0_541196100;
    let tmp2 = z1 - x[6] * FIX_1_847759065;
    let tmp3 = z1 + x[2] * FIX_0_765366865;
    let tmp0 = (x[0] + x[4]) << CONST_BITS;
    let tmp1 = (x[0] - x[4]) << CONST_BITS;
    let (tmp10, tmp13) = (tmp0 + tmp3, tmp0 - tmp3);
    let (tmp11, tmp12) = (tmp1 + tmp2, tmp1 - tmp2);

    let (t0, t1, t2, t3) = (x[7], x[5], x[3], x[1]);
    let (z1, z2, z3, z4) = (t0 + t3, t1 + t2, t0 + t2, t1 + t3);
    let z5 = (z3 + z4) * FIX_1_175875602;
    let (t0, t1, t2, t3) = (t0 * FIX_0_298631336, t1 * FIX_2_053119869, t2 * FIX_3_072711026, t3 * FIX_1_501321110);
    let (z1, z2) = (-z1 * FIX_0_899976223, -z2 * FIX_2_562915447);
    let z3 = -z3 * FIX_1_961570560 + z5;
    let z4 = -z4 * FIX_0_390180644 + z5;
    let (t0, t1, t2, t3) = (t0 + z1 + z3, t1 + z2 + z4, t2 + z2 + z3, t3 + z1 + z4);
    [tmp10 + t3, tmp11 + t2, tmp12 + t1, tmp13 + t0, tmp13 - t0, tmp12 - t1, tmp11 - t2, tmp10 - t3]
}

/// Dequantize, inverse DCT and level shift with libjpeg's integer "islow"
/// arithmetic, so decoded samples match libjpeg bit for bit.
pub fn idct_islow(coeffs: &[i16; 64], table: &QuantTable) -> [u8; 64] {
    let steps = table.values();
    let mut ws = [0i64; 64];
    for col in 0..8 {
        let x: [i64; 8] = std::array::from_fn(|row| i64::from(coeffs[row * 8 + col]) * i64::from(steps[row * 8 + col]));
        let out = islow_1d(x);
        for (row, v) in out.into_iter().enumerate() {
            ws[row * 8 + col] = descale(v, CONST_BITS - PASS1_BITS);
        }
    }
    let mut out = [0u8; 64];
    for row in 0..8 {
        let x: [i64; 8] = std::array::from_fn(|c| ws[row * 8 + c]);
        for (c, v) in islow_1d(x).into_iter().enumerate() {
            out[row * 8 + c] = range_limit(descale(v, CONST_BITS + PASS1_BITS + 3));
        }
    }
    out
}

/// `round_half_away_from_zero(c / step)` per coefficient.
pub fn quantize_block(coeffs: &[f64; 64], table: &QuantTable) -> [i32; 64] {
    let steps = table.values();
    std::array::from_fn(|i| (coeffs[i] / f64::from(steps[i])).round() as i32)
}

pub fn dequantize_block(coeffs: &[i16; 64], table: &QuantTable) -> [f64; 64] {
    let steps = table.values();
    std::array::from_fn(|i| f64::from(i32::from(coeffs[i]) * i32::from(steps[i])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qt::{Precision, BASE_LUMINANCE};

    #[test]
    fn cos_literals_match_libm() {
        for k in 0..=8 {
            let exact = (k as f64 * std::f64::consts::PI / 16.0).cos();
            assert!((COS16[k] - exact).abs() < 1e-15);
        }
        for m in 0..64 {
            let exact = (m as f64 * std::f64::consts::PI / 16.0).cos();
            assert!((cos16(m) - exact).abs() < 1e-13, "m={m}");
        }
    }

    #[test]
    fn flat_block() {
        let block = [37.0; 64];
        let c = fdct_8x8(&block);
        assert!((c[0] - 8.0 * 37.0).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn quantize_examples() {
        let t = QuantTable::new(BASE_LUMINANCE, Precision::Bits8).unwrap();
        let mut c = [0.0; 64];
        c[53] = 121.0;
        c[54] = 60.0; // step 120 -> 0.5 -> 1
        assert_eq!(t.values()[53], 121);
        assert_eq!(t.values()[54], 120);
        let q = quantize_block(&c, &t);
        assert_eq!(q[53], 1);
        assert_eq!(q[54], 1);
        c[53] = 60.5;
        c[54] = -60.0;
        let q = quantize_block(&c, &t);
        assert_eq!(q[53], 1);
        assert_eq!(q[54], -1);

        let ones = QuantTable::new([1; 64], Precision::Bits8).unwrap();
        let c: [f64; 64] = std::array::from_fn(|i| i as f64 * 0.37 - 11.5);
        let q = quantize_block(&c, &ones);
        for i in 0..64 {
            assert_eq!(q[i], c[i].round() as i32);
        }
    }

    #[test]
    fn integer_idct_tracks_float_idct() {
        let t = QuantTable::new(BASE_LUMINANCE, Precision::Bits8).unwrap();
        let mut state = 0x2545_f491_4f6c_dd1du64;
        for _ in 0..500 {
            let coeffs: [i16; 64] = std::array::from_fn(|i| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let span = if i == 0 { 60 } else { 9 };
                (state % (2 * span + 1)) as i16 - span as i16
            });
            let fast = idct_islow(&coeffs, &t);
            let float = idct_8x8(&dequantize_block(&coeffs, &t));
            // outside [-384, 384) libjpeg wraps instead of saturating
            for i in (0..64).filter(|&i| (-384.0..384.0).contains(&float[i])) {
                let expect = (float[i] + 128.0).round().clamp(0.0, 255.0);
                assert!((f64::from(fast[i]) - expect).abs() <= 1.0, "sample {i}: {} vs {}", fast[i], float[i] + 128.0);
            }
        }
        assert_eq!(idct_islow(&[0; 64], &t), [128; 64]);
    }
}
