//! Synthetic test data.
//!
//! Everything here is a pure function of its seed: textured and document-like
//! images, corpora carrying a known set of quantization tables, spliced
//! images for error level analysis, and half double-compressed images for the
//! double-quantization detector. The `fixtures gen` CLI command writes the
//! desk-scale corpus built by [`generate_corpus`].

use std::collections::BTreeSet;
use std::path::Path;

use crate::codec::{decode, encode, CodecError, ColorModel, EncodeParams, PixelImage, Subsampling};
use crate::pnm::write_pnm;
use crate::qt::{standard_table, Precision, QualityFactor, QuantTable, StandardRole};
use crate::rng::SeededRng;

/// Rectangular region, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Row-major boolean mask with the dimensions of an image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { width, height, data }
    }

    /// 8-bit PGM with 255 for positives.
    pub fn to_pgm(&self) -> Vec<u8> {
        let data = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        write_pnm(&PixelImage::new(self.width, self.height, ColorModel::Gray, data).expect("mask dimensions"))
    }
}

pub fn std_table(q: u8, role: StandardRole) -> QuantTable {
    standard_table(QualityFactor::new(i64::from(q)).expect("quality in range"), role)
}

/// Encode parameters with standard tables at quality `q`.
pub fn std_params(q: u8) -> EncodeParams {
    EncodeParams::new(std_table(q, StandardRole::Luminance), std_table(q, StandardRole::Chrominance))
}

/// Smooth random field in `[0, 1]`: bilinear value noise over a lattice
/// with `cell` pixels per step.
fn value_noise(w: u32, h: u32, cell: u32, rng: &mut SeededRng) -> Vec<f64> {
    let gw = (w / cell + 2) as usize;
    let gh = (h / cell + 2) as usize;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.unit_f64()).collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        let fy = f64::from(y) / f64::from(cell);
        let (gy, ty) = (fy as usize, fy.fract());
        for x in 0..w {
            let fx = f64::from(x) / f64::from(cell);
            let (gx, tx) = (fx as usize, fx.fract());
            let g = |i: usize, j: usize| grid[j * gw + i];
            let top = g(gx, gy) * (1.0 - tx) + g(gx + 1, gy) * tx;
            let bottom = g(gx, gy + 1) * (1.0 - tx) + g(gx + 1, gy + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// One channel of multi-octave noise with fine grain, in `[0, 255]`.
fn textured_channel(w: u32, h: u32, rng: &mut SeededRng) -> Vec<f64> {
    let octaves = [(48, 0.45), (16, 0.3), (6, 0.15), (2, 0.1)];
    let layers: Vec<Vec<f64>> = octaves.iter().map(|&(c, _)| value_noise(w, h, c, rng)).collect();
    (0..(w * h) as usize)
        .map(|i| {
            let v: f64 = octaves.iter().zip(&layers).map(|(&(_, a), l)| a * l[i]).sum();
            let grain = rng.unit_f64() * 24.0 - 12.0;
            (v * 230.0 + 12.0 + grain).clamp(0.0, 255.0)
        })
        .collect()
}

/// Photo-like texture with well-populated DCT histograms.
pub fn textured_image(w: u32, h: u32, seed: u64, color: ColorModel) -> PixelImage {
    let mut rng = SeededRng::new(seed);
    match color {
        ColorModel::Gray => {
            let c = textured_channel(w, h, &mut rng);
            PixelImage::new(w, h, ColorModel::Gray, c.iter().map(|v| v.round() as u8).collect())
                .expect("dimensions match")
        }
        ColorModel::Rgb => {
            let base = textured_channel(w, h, &mut rng);
            let tint: Vec<Vec<f64>> = (0..3).map(|_| value_noise(w, h, 40, &mut rng)).collect();
            let data = (0..(w * h) as usize)
                .flat_map(|i| {
                    let t = [tint[0][i], tint[1][i], tint[2][i]];
                    t.map(|t| (base[i] * (0.7 + 0.3 * t) + 40.0 * (t - 0.5)).clamp(0.0, 255.0).round() as u8)
                })
                .collect();
            PixelImage::new(w, h, ColorModel::Rgb, data).expect("dimensions match")
        }
    }
}

/// Scanned-document look: paper texture, lines of dark glyph strokes, an
/// optional colored stamp.
pub fn document_image(w: u32, h: u32, seed: u64, color: ColorModel) -> PixelImage {
    let mut rng = SeededRng::new(seed);
    let paper = value_noise(w, h, 24, &mut rng);
    let mut ink = vec![0.0f64; (w * h) as usize];
    let line_h = 14 + rng.below(6) as u32;
    let margin = w / 12 + 2;
    let mut y = margin;
    while y + line_h < h.saturating_sub(margin) {
        let mut x = margin + rng.below(u64::from(line_h)) as u32;
        let line_end = w.saturating_sub(margin + rng.below(u64::from(w / 4 + 1)) as u32);
        while x + 4 < line_end {
            let word = 3 + rng.below(8) as u32;
            for _ in 0..word {
                let gw = 4 + rng.below(4) as u32;
                let gh = line_h * 2 / 3 - rng.below(4) as u32;
                let top = y + line_h - gh;
                // a glyph: vertical stem plus a horizontal bar
                for yy in top..(y + line_h).min(h) {
                    for xx in x..(x + 2).min(w) {
                        ink[(yy * w + xx) as usize] = 1.0;
                    }
                }
                let bar = top + rng.below(u64::from(gh.max(1))) as u32;
                for xx in x..(x + gw).min(w) {
                    ink[(bar.min(h - 1) * w + xx) as usize] = 1.0;
                }
                x += gw + 1;
                if x + 4 >= line_end {
                    break;
                }
            }
            x += 5 + rng.below(4) as u32;
        }
        y += line_h + 6 + rng.below(6) as u32;
    }
    let stamp = (w >= 64 && h >= 64).then(|| {
        let r = (w.min(h) / 8) as f64;
        let cx = r + rng.unit_f64() * (f64::from(w) - 2.0 * r);
        let cy = r + rng.unit_f64() * (f64::from(h) - 2.0 * r);
        (cx, cy, r)
    });
    let grain: Vec<f64> = (0..w * h).map(|_| rng.unit_f64() * 10.0 - 5.0).collect();
    let pix = |i: usize, x: u32, y: u32| -> [f64; 3] {
        let p = 228.0 + paper[i] * 20.0 + grain[i];
        let mut c = [p, p - 2.0, p - 8.0];
        if let Some((cx, cy, r)) = stamp {
            let d = ((f64::from(x) - cx).powi(2) + (f64::from(y) - cy).powi(2)).sqrt();
            if (r * 0.8..r).contains(&d) {
                c = [c[0] * 0.9, c[1] * 0.45, c[2] * 0.5];
            }
        }
        let k = ink[i];
        c.map(|v| (v * (1.0 - 0.85 * k) + 18.0 * k).clamp(0.0, 255.0))
    };
    match color {
        ColorModel::Gray => PixelImage::from_fn_gray(w, h, |x, y| {
            let c = pix((y * w + x) as usize, x, y);
            (0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]).round() as u8
        }),
        ColorModel::Rgb => PixelImage::from_fn_rgb(w, h, |x, y| pix((y * w + x) as usize, x, y).map(|v| v.round() as u8)),
    }
}

/// Non-standard 8-bit table: a standard table at a random quality with a
/// few entries nudged.
pub fn random_table(rng: &mut SeededRng) -> QuantTable {
    let q = rng.range_inclusive(20, 98) as u8;
    let mut v = *std_table(q, StandardRole::Luminance).values();
    for _ in 0..1 + rng.below(6) {
        let i = rng.below(64) as usize;
        let delta = rng.range_inclusive(1, 5) as i32 * if rng.below(2) == 0 { -1 } else { 1 };
        v[i] = (i32::from(v[i]) + delta).clamp(1, 255) as u16;
    }
    QuantTable::new(v, Precision::Bits8).expect("entries clamped to 8-bit range")
}

/// `k` pairwise-distinct tables.
pub fn distinct_tables(k: usize, rng: &mut SeededRng) -> Vec<QuantTable> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let t = random_table(rng);
        if seen.insert(t.fingerprint()) {
            out.push(t);
        }
    }
    out
}

/// Writes `k` distinct tables over `files` small JPEGs (every table used at
/// least once when `files >= k`) and returns the tables.
pub fn write_table_corpus(dir: &Path, k: usize, files: usize, seed: u64) -> std::io::Result<Vec<QuantTable>> {
    std::fs::create_dir_all(dir)?;
    let mut rng = SeededRng::new(seed);
    let tables = distinct_tables(k, &mut rng);
    let chroma = std_table(75, StandardRole::Chrominance);
    for i in 0..files {
        let t = tables[i % k.max(1)];
        let img = textured_image(24, 16, seed ^ i as u64, if i % 2 == 0 { ColorModel::Gray } else { ColorModel::Rgb });
        let bytes = encode(&img, &EncodeParams::new(t, chroma)).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(format!("img_{i:04}.jpg")), bytes)?;
    }
    Ok(tables)
}

/// JPEG-compress at standard quality `q` and decode again.
pub fn jpeg_round_trip(img: &PixelImage, q: u8, subsampling: Subsampling) -> Result<PixelImage, CodecError> {
    decode(&encode(img, &std_params(q).subsampling(subsampling))?)
}

fn composite(host: &PixelImage, patch: &PixelImage, region: impl Fn(u32, u32) -> bool) -> PixelImage {
    let c = host.color().channels();
    let mut data = host.data().to_vec();
    for y in 0..host.height() {
        for x in 0..host.width() {
            if region(x, y) {
                let i = (y as usize * host.width() as usize + x as usize) * c;
                data[i..i + c].copy_from_slice(patch.pixel(x, y));
            }
        }
    }
    PixelImage::new(host.width(), host.height(), host.color(), data).expect("same dimensions")
}

#[derive(Debug, Clone)]
pub struct Forgery {
    pub jpeg: Vec<u8>,
    pub mask: Mask,
}

/// Host compressed at `host_q`, a rectangle taken from the same scene
/// compressed at `patch_q`, saved at `final_q`.
pub fn ela_splice(w: u32, h: u32, seed: u64, host_q: u8, patch_q: u8, final_q: u8) -> Result<Forgery, CodecError> {
    let mut rng = SeededRng::new(seed);
    let scene = textured_image(w, h, seed, ColorModel::Rgb);
    let host = jpeg_round_trip(&scene, host_q, Subsampling::S444)?;
    let patch = jpeg_round_trip(&scene, patch_q, Subsampling::S444)?;
    let (pw, ph) = ((w / 3).max(8) & !7, (h / 3).max(8) & !7);
    let x0 = (rng.below(u64::from(w - pw) + 1) as u32) & !7;
    let y0 = (rng.below(u64::from(h - ph) + 1) as u32) & !7;
    let rect = Rect { x0, y0, x1: x0 + pw, y1: y0 + ph };
    let forged = composite(&host, &patch, |x, y| rect.contains(x, y));
    let jpeg = encode(&forged, &std_params(final_q).subsampling(Subsampling::S444))?;
    Ok(Forgery { jpeg, mask: Mask::from_fn(w, h, |x, y| rect.contains(x, y)) })
}

/// Left part double-compressed (`q1` then `q2`), right part pasted from the
/// pristine scene and compressed once at `q2`. The split is on a 16-pixel
/// boundary so no block mixes the two histories.
pub fn half_double_compressed(w: u32, h: u32, seed: u64, q1: u8, q2: u8) -> Result<Forgery, CodecError> {
    let scene = textured_image(w, h, seed, ColorModel::Rgb);
    let first = jpeg_round_trip(&scene, q1, Subsampling::S420)?;
    let split = (w / 2) & !15;
    let forged = composite(&first, &scene, |x, _| x >= split);
    let jpeg = encode(&forged, &std_params(q2))?;
    Ok(Forgery { jpeg, mask: Mask::from_fn(w, h, |x, _| x >= split) })
}

/// Document forgery: a block-aligned rectangle from another document
/// compressed once, the rest double-compressed.
pub fn document_forgery(w: u32, h: u32, seed: u64, q1: u8, q2: u8) -> Result<Forgery, CodecError> {
    let mut rng = SeededRng::new(seed);
    let host = jpeg_round_trip(&document_image(w, h, seed, ColorModel::Rgb), q1, Subsampling::S420)?;
    let donor = textured_image(w, h, seed.wrapping_add(1), ColorModel::Rgb);
    let (pw, ph) = ((w / 3) & !15, (h / 4) & !15);
    let x0 = (rng.below(u64::from(w - pw) + 1) as u32) & !15;
    let y0 = (rng.below(u64::from(h - ph) + 1) as u32) & !15;
    let rect = Rect { x0, y0, x1: x0 + pw, y1: y0 + ph };
    let forged = composite(&host, &donor, |x, y| rect.contains(x, y));
    let jpeg = encode(&forged, &std_params(q2))?;
    Ok(Forgery { jpeg, mask: Mask::from_fn(w, h, |x, y| rect.contains(x, y)) })
}

/// Sizes of the desk-scale corpus.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSpec {
    pub bank_files: usize,
    pub bank_tables: usize,
    pub tampered: usize,
    pub unaltered: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { bank_files: 120, bank_tables: 24, tampered: 12, unaltered: 8, width: 256, height: 192 }
    }
}

/// Writes `bank/` (JPEGs with a long-tailed table distribution),
/// `tampered/` with `masks/`, and `unaltered/` under `out`.
pub fn generate_corpus(out: &Path, seed: u64, spec: &CorpusSpec) -> std::io::Result<()> {
    let io = std::io::Error::other;
    let bank_dir = out.join("bank");
    let tampered_dir = out.join("tampered");
    let masks_dir = out.join("masks");
    let unaltered_dir = out.join("unaltered");
    for d in [&bank_dir, &tampered_dir, &masks_dir, &unaltered_dir] {
        std::fs::create_dir_all(d)?;
    }

    let mut rng = SeededRng::new(seed);
    let tables = distinct_tables(spec.bank_tables.max(1), &mut rng);
    let chroma = std_table(80, StandardRole::Chrominance);
    for i in 0..spec.bank_files {
        // Zipf-like: rank r drawn with weight 1/(r+1)
        let weights: Vec<f64> = (0..tables.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let mut u = rng.unit_f64() * weights.iter().sum::<f64>();
        let mut r = 0;
        while r + 1 < tables.len() && u >= weights[r] {
            u -= weights[r];
            r += 1;
        }
        let t = if i < tables.len() { tables[i] } else { tables[r] };
        let img = document_image(64, 48, seed ^ (i as u64) << 8, ColorModel::Gray);
        let bytes = encode(&img, &EncodeParams::new(t, chroma)).map_err(io)?;
        std::fs::write(bank_dir.join(format!("scan_{i:04}.jpg")), bytes)?;
    }

    for i in 0..spec.tampered {
        let q1 = 50 + (rng.below(26) as u8);
        let q2 = (q1 + 15 + rng.below(11) as u8).min(100);
        let f = document_forgery(spec.width, spec.height, rng.next_u64(), q1, q2).map_err(io)?;
        std::fs::write(tampered_dir.join(format!("doc_{i:03}.jpg")), &f.jpeg)?;
        std::fs::write(masks_dir.join(format!("doc_{i:03}.pgm")), f.mask.to_pgm())?;
    }

    for i in 0..spec.unaltered {
        let img = document_image(spec.width, spec.height, rng.next_u64(), ColorModel::Rgb);
        let name = format!("auth_{i:03}");
        if i % 4 == 3 {
            // pristine sources exercise the non-JPEG input path
            std::fs::write(unaltered_dir.join(format!("{name}.ppm")), write_pnm(&img))?;
        } else {
            let q = 60 + rng.below(36) as u8;
            std::fs::write(unaltered_dir.join(format!("{name}.jpg")), encode(&img, &std_params(q)).map_err(io)?)?;
        }
    }
    Ok(())
}
