// BT.601 full-range (JFIF) color conversion.

pub fn rgb_to_ycbcr(r: u8, g: u8, b: u8) -> [f64; 3] {
    let (r, g, b) = (f64::from(r), f64::from(g), f64::from(b));
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b + 128.0,
    ]
}

#[cfg(test)]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

const SCALE_BITS: u32 = 16;
const ONE_HALF: i32 = 1 << (SCALE_BITS - 1);
// round(c * 2^16) for the inverse BT.601 coefficients
const FIX_1_40200: i32 = 91881;
const FIX_1_77200: i32 = 116130;
const FIX_0_71414: i32 = 46802;
const FIX_0_34414: i32 = 22554;

/// Inverse conversion in libjpeg's 16-bit fixed point.
pub fn ycbcr_to_rgb(y: u8, cb: u8, cr: u8) -> [u8; 3] {
    let y = i32::from(y);
    let cb = i32::from(cb) - 128;
    let cr = i32::from(cr) - 128;
    let clamp = |v: i32| v.clamp(0, 255) as u8;
    [
        clamp(y + ((FIX_1_40200 * cr + ONE_HALF) >> SCALE_BITS)),
        clamp(y + ((-FIX_0_34414 * cb - FIX_0_71414 * cr + ONE_HALF) >> SCALE_BITS)),
        clamp(y + ((FIX_1_77200 * cb + ONE_HALF) >> SCALE_BITS)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_axis_round_trips() {
        for v in 0..=255u8 {
            let [y, cb, cr] = rgb_to_ycbcr(v, v, v);
            assert!((y - f64::from(v)).abs() < 1e-9);
            assert!((cb - 128.0).abs() < 1e-6);
            assert!((cr - 128.0).abs() < 1e-6);
            assert_eq!(ycbcr_to_rgb(v, 128, 128), [v, v, v]);
        }
    }

    #[test]
    fn primaries_within_one() {
        for rgb in [[255, 0, 0], [0, 255, 0], [0, 0, 255], [12, 200, 77]] {
            let [y, cb, cr] = rgb_to_ycbcr(rgb[0], rgb[1], rgb[2]);
            let back = ycbcr_to_rgb(to_u8(y), to_u8(cb), to_u8(cr));
            for k in 0..3 {
                assert!((i32::from(back[k]) - i32::from(rgb[k])).abs() <= 2, "{rgb:?} -> {back:?}");
            }
        }
    }
}
