use super::huffman::{self, category, EncodeTable};
use super::{
    dct, rgb_to_ycbcr, CodecError, CoeffComponent, CoeffImage, ColorModel, EncodeParams,
    PixelImage, Subsampling,
};
use crate::parse::{APP0, DHT, DQT, DRI, EOI, SOF0, SOF1, SOI, SOS};
use crate::qt::{Precision, QuantTable, ZIGZAG_NATURAL};

/// Edge-replicated sample plane.
struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    fn padded(src_w: usize, src_h: usize, width: usize, height: usize, sample: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            let sy = y.min(src_h - 1);
            for x in 0..width {
                data.push(sample(x.min(src_w - 1), sy));
            }
        }
        Self { width, height, data }
    }

    /// 2x2 box average.
    fn halve(&self) -> Plane {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let i = 2 * y * self.width + 2 * x;
                let s = self.data[i] + self.data[i + 1] + self.data[i + self.width] + self.data[i + self.width + 1];
                data.push(s * 0.25);
            }
        }
        Plane { width: w, height: h, data }
    }

    fn block(&self, bx: usize, by: usize) -> [f64; 64] {
        std::array::from_fn(|i| {
            let (y, x) = (by * 8 + i / 8, bx * 8 + i % 8);
            self.data[y * self.width + x] - 128.0
        })
    }
}

fn quantize_plane(plane: &Plane, table: &QuantTable, blocks_w: usize, blocks_h: usize) -> Vec<i16> {
    let mut out = Vec::with_capacity(blocks_w * blocks_h * 64);
    for by in 0..blocks_h {
        for bx in 0..blocks_w {
            let q = dct::quantize_block(&dct::fdct_8x8(&plane.block(bx, by)), table);
            out.extend(q.iter().map(|&v| v.clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16));
        }
    }
    out
}

fn check_dims(img: &PixelImage) -> Result<(), CodecError> {
    if img.width() > 65535 || img.height() > 65535 {
        return Err(CodecError::ImageTooLarge {
            width: img.width().into(),
            height: img.height().into(),
        });
    }
    Ok(())
}

/// Forward transform and quantization without entropy coding.
pub fn to_coefficients(img: &PixelImage, params: &EncodeParams) -> Result<CoeffImage, CodecError> {
    check_dims(img)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let components = match img.color() {
        ColorModel::Gray => {
            let (bw, bh) = (w.div_ceil(8), h.div_ceil(8));
            let data = img.data();
            let plane = Plane::padded(w, h, bw * 8, bh * 8, |x, y| f64::from(data[y * w + x]));
            vec![CoeffComponent {
                id: 1,
                h: 1,
                v: 1,
                table_id: 0,
                table: params.luminance,
                blocks_w: bw,
                blocks_h: bh,
                data: quantize_plane(&plane, &params.luminance, bw, bh),
            }]
        }
        ColorModel::Rgb => {
            let f = match params.subsampling {
                Subsampling::S444 => 1,
                Subsampling::S420 => 2,
            };
            let (mcux, mcuy) = (w.div_ceil(8 * f), h.div_ceil(8 * f));
            let (pw, ph) = (mcux * 8 * f, mcuy * 8 * f);
            let ycc: Vec<[f64; 3]> = img
                .data()
                .chunks_exact(3)
                .map(|p| rgb_to_ycbcr(p[0], p[1], p[2]))
                .collect();
            let planes: Vec<Plane> = (0..3)
                .map(|k| {
                    let full = Plane::padded(w, h, pw, ph, |x, y| ycc[y * w + x][k]);
                    if k > 0 && f == 2 {
                        full.halve()
                    } else {
                        full
                    }
                })
                .collect();
            planes
                .iter()
                .enumerate()
                .map(|(k, plane)| {
                    let (table, table_id, s) = if k == 0 {
                        (params.luminance, 0, f as u8)
                    } else {
                        (params.chrominance, 1, 1)
                    };
                    let (bw, bh) = (mcux * usize::from(s), mcuy * usize::from(s));
                    CoeffComponent {
                        id: k as u8 + 1,
                        h: s,
                        v: s,
                        table_id,
                        table,
                        blocks_w: bw,
                        blocks_h: bh,
                        data: quantize_plane(plane, &table, bw, bh),
                    }
                })
                .collect()
        }
    };
    Ok(CoeffImage {
        width: img.width(),
        height: img.height(),
        components,
    })
}

/// Encodes pixels as a baseline JFIF stream.
pub fn encode(img: &PixelImage, params: &EncodeParams) -> Result<Vec<u8>, CodecError> {
    let coeffs = to_coefficients(img, params)?;
    encode_coefficients(&coeffs, params.restart_interval)
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn put(&mut self, bits: u32, len: u8) {
        debug_assert!(len <= 16);
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (bits & ((1u32 << len) - 1));
        self.nbits += u32::from(len);
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
        }
        self.acc &= (1u32 << self.nbits) - 1;
    }

    /// Pads the last partial byte with 1-bits.
    fn flush(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.put((1u32 << pad) - 1, pad);
        }
    }
}

struct Tables {
    dc: [EncodeTable; 2],
    ac: [EncodeTable; 2],
}

impl Tables {
    fn standard() -> Self {
        Self {
            dc: [
                EncodeTable::new(&huffman::DC_LUMA_BITS, &huffman::DC_LUMA_VALS),
                EncodeTable::new(&huffman::DC_CHROMA_BITS, &huffman::DC_CHROMA_VALS),
            ],
            ac: [
                EncodeTable::new(&huffman::AC_LUMA_BITS, &huffman::AC_LUMA_VALS),
                EncodeTable::new(&huffman::AC_CHROMA_BITS, &huffman::AC_CHROMA_VALS),
            ],
        }
    }
}

fn encode_block(
    w: &mut BitWriter,
    block: &[i16; 64],
    pred: &mut i32,
    dc: &EncodeTable,
    ac: &EncodeTable,
) -> Result<(), CodecError> {
    let diff = i32::from(block[0]) - *pred;
    *pred = i32::from(block[0]);
    let cat = category(diff);
    if cat > 11 {
        return Err(CodecError::InvalidImage(format!("DC difference {diff} out of range")));
    }
    let (code, len) = dc.get(cat);
    w.put(u32::from(code), len);
    w.put(if diff < 0 { (diff - 1) as u32 } else { diff as u32 }, cat);

    let mut run = 0u8;
    for &nat in &ZIGZAG_NATURAL[1..] {
        let v = i32::from(block[usize::from(nat)]);
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (code, len) = ac.get(0xF0);
            w.put(u32::from(code), len);
            run -= 16;
        }
        let cat = category(v);
        if cat > 10 {
            return Err(CodecError::InvalidImage(format!("AC coefficient {v} out of range")));
        }
        let (code, len) = ac.get((run << 4) | cat);
        w.put(u32::from(code), len);
        w.put(if v < 0 { (v - 1) as u32 } else { v as u32 }, cat);
        run = 0;
    }
    if run > 0 {
        let (code, len) = ac.get(0x00);
        w.put(u32::from(code), len);
    }
    Ok(())
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

/// Writes already-quantized coefficients as a JFIF stream, no requantization.
pub fn encode_coefficients(img: &CoeffImage, restart_interval: Option<u16>) -> Result<Vec<u8>, CodecError> {
    let n = img.components.len();
    if !(1..=4).contains(&n) {
        return Err(CodecError::InvalidImage(format!("{n} components")));
    }
    if img.width == 0 || img.height == 0 {
        return Err(CodecError::InvalidImage("zero dimension".into()));
    }
    if img.width > 65535 || img.height > 65535 {
        return Err(CodecError::ImageTooLarge {
            width: img.width.into(),
            height: img.height.into(),
        });
    }
    let (mh, mv) = (usize::from(img.max_h()), usize::from(img.max_v()));
    let (mcux, mcuy) = (
        (img.width as usize).div_ceil(8 * mh),
        (img.height as usize).div_ceil(8 * mv),
    );
    for c in &img.components {
        let enough = c.blocks_w >= mcux * usize::from(c.h) && c.blocks_h >= mcuy * usize::from(c.v);
        if !enough || c.data.len() != c.blocks_w * c.blocks_h * 64 || c.table_id > 3 {
            return Err(CodecError::InvalidImage(format!("component {} has inconsistent block grid", c.id)));
        }
    }

    let mut out = Vec::with_capacity(1024);
    out.extend_from_slice(&[0xFF, SOI]);
    segment(&mut out, APP0, b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00");

    let mut tables: Vec<(u8, QuantTable)> = Vec::new();
    for c in &img.components {
        match tables.iter().find(|(id, _)| *id == c.table_id) {
            Some((_, t)) if *t != c.table => {
                return Err(CodecError::InvalidImage(format!("conflicting tables for id {}", c.table_id)))
            }
            Some(_) => {}
            None => tables.push((c.table_id, c.table)),
        }
    }
    tables.sort_by_key(|(id, _)| *id);
    let mut dqt = Vec::new();
    for (id, t) in &tables {
        let zz = t.zigzag_values();
        match t.precision() {
            Precision::Bits8 => {
                dqt.push(*id);
                dqt.extend(zz.iter().map(|&v| v as u8));
            }
            Precision::Bits16 => {
                dqt.push(0x10 | *id);
                dqt.extend(zz.iter().flat_map(|v| v.to_be_bytes()));
            }
        }
    }
    segment(&mut out, DQT, &dqt);

    let extended = tables.iter().any(|(_, t)| t.precision() == Precision::Bits16);
    let mut sof = vec![8];
    sof.extend_from_slice(&(img.height as u16).to_be_bytes());
    sof.extend_from_slice(&(img.width as u16).to_be_bytes());
    sof.push(n as u8);
    for c in &img.components {
        sof.extend_from_slice(&[c.id, (c.h << 4) | c.v, c.table_id]);
    }
    segment(&mut out, if extended { SOF1 } else { SOF0 }, &sof);

    let mut dht = Vec::new();
    let classes: &[(u8, &[u8; 16], &[u8])] = &[
        (0x00, &huffman::DC_LUMA_BITS, &huffman::DC_LUMA_VALS),
        (0x10, &huffman::AC_LUMA_BITS, &huffman::AC_LUMA_VALS),
        (0x01, &huffman::DC_CHROMA_BITS, &huffman::DC_CHROMA_VALS),
        (0x11, &huffman::AC_CHROMA_BITS, &huffman::AC_CHROMA_VALS),
    ];
    for (tc_th, bits, vals) in classes.iter().take(if n == 1 { 2 } else { 4 }) {
        dht.push(*tc_th);
        dht.extend_from_slice(*bits);
        dht.extend_from_slice(vals);
    }
    segment(&mut out, DHT, &dht);

    let ri = restart_interval.unwrap_or(0);
    if ri > 0 {
        segment(&mut out, DRI, &ri.to_be_bytes());
    }

    let mut sos = vec![n as u8];
    for (k, c) in img.components.iter().enumerate() {
        let t = u8::from(k > 0);
        sos.extend_from_slice(&[c.id, (t << 4) | t]);
    }
    sos.extend_from_slice(&[0, 63, 0]);
    segment(&mut out, SOS, &sos);

    let tables = Tables::standard();
    let mut w = BitWriter { out, acc: 0, nbits: 0 };
    let mut preds = vec![0i32; n];

    // (component, bx, by) per MCU
    let mcus: Vec<Vec<(usize, usize, usize)>> = if n == 1 {
        let (bw, bh) = img.coded_blocks(0);
        (0..bh)
            .flat_map(|by| (0..bw).map(move |bx| vec![(0, bx, by)]))
            .collect()
    } else {
        (0..mcuy)
            .flat_map(|my| (0..mcux).map(move |mx| (mx, my)))
            .map(|(mx, my)| {
                let mut blocks = Vec::new();
                for (k, c) in img.components.iter().enumerate() {
                    let (h, v) = (usize::from(c.h), usize::from(c.v));
                    for dy in 0..v {
                        for dx in 0..h {
                            blocks.push((k, mx * h + dx, my * v + dy));
                        }
                    }
                }
                blocks
            })
            .collect()
    };
    let total = mcus.len();
    for (i, mcu) in mcus.iter().enumerate() {
        for &(k, bx, by) in mcu {
            let t = usize::from(k > 0);
            encode_block(
                &mut w,
                img.components[k].block(bx, by),
                &mut preds[k],
                &tables.dc[t],
                &tables.ac[t],
            )?;
        }
        if ri > 0 && (i + 1) % usize::from(ri) == 0 && i + 1 < total {
            w.flush();
            let rst = 0xD0 + (((i + 1) / usize::from(ri) - 1) % 8) as u8;
            w.out.extend_from_slice(&[0xFF, rst]);
            preds.iter_mut().for_each(|p| *p = 0);
        }
    }
    w.flush();
    let mut out = w.out;
    out.extend_from_slice(&[0xFF, EOI]);
    Ok(out)
}
