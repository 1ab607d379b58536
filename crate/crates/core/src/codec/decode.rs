use super::huffman::DecodeTable;
use super::{dct, ycbcr_to_rgb, CodecError, CoeffComponent, CoeffImage, ColorModel, PixelImage, MAX_PIXELS};
use crate::parse::{self, FrameType, DHT, DQT, DRI, SOS};
use crate::qt::{QuantTable, ZIGZAG_NATURAL};

/// Entropy-coded data reader: removes stuffed zero bytes, stops at markers,
/// and feeds 1-bits past the end while counting them so a block that needs
/// them can be reported as corrupt instead of decoding garbage.
pub(crate) struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u64,
    nbits: u32,
    phantom_bits: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        Self {
            data,
            pos: 0,
            acc: 0,
            nbits: 0,
            phantom_bits: 0,
        }
    }

    fn fill(&mut self) {
        while self.nbits <= 56 {
            let byte = match self.data.get(self.pos) {
                Some(&0xFF) => match self.data.get(self.pos + 1) {
                    Some(0x00) => {
                        self.pos += 2;
                        Some(0xFF)
                    }
                    _ => None,
                },
                Some(&b) => {
                    self.pos += 1;
                    Some(b)
                }
                None => None,
            };
            match byte {
                Some(b) => self.acc |= u64::from(b) << (56 - self.nbits),
                None => {
                    self.acc |= 0xFFu64 << (56 - self.nbits);
                    self.phantom_bits += 8;
                }
            }
            self.nbits += 8;
        }
    }

    pub(crate) fn bit(&mut self) -> u32 {
        self.bits(1)
    }

    fn bits(&mut self, n: u8) -> u32 {
        if n == 0 {
            return 0;
        }
        if self.nbits < u32::from(n) {
            self.fill();
        }
        let v = (self.acc >> (64 - u32::from(n))) as u32;
        self.acc <<= n;
        self.nbits -= u32::from(n);
        v
    }

    fn receive_extend(&mut self, s: u8) -> i32 {
        if s == 0 {
            return 0;
        }
        let v = self.bits(s) as i32;
        if v < (1 << (s - 1)) {
            v - (1 << s) + 1
        } else {
            v
        }
    }

    fn overran(&self) -> bool {
        self.phantom_bits > self.nbits
    }

    /// Drops buffered padding and consumes the expected RSTn marker.
    fn restart(&mut self, expected: u8) -> Result<(), CodecError> {
        if self.overran() {
            return Err(CodecError::CorruptStream("entropy data ended before restart marker".into()));
        }
        self.acc = 0;
        self.nbits = 0;
        self.phantom_bits = 0;
        match self.data.get(self.pos..self.pos + 2) {
            Some([0xFF, m]) if *m == 0xD0 + expected => {
                self.pos += 2;
                Ok(())
            }
            _ => Err(CodecError::CorruptStream(format!(
                "expected RST{expected} at entropy offset {}",
                self.pos
            ))),
        }
    }
}

struct ScanComponent {
    index: usize,
    dc: usize,
    ac: usize,
}

fn decode_block(
    r: &mut BitReader<'_>,
    dc: &DecodeTable,
    ac: &DecodeTable,
    pred: &mut i32,
    out: &mut [i16],
) -> Result<(), CodecError> {
    let s = dc.decode(r)?;
    if s > 11 {
        return Err(CodecError::CorruptStream(format!("DC category {s}")));
    }
    *pred += r.receive_extend(s);
    out[0] = (*pred).clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16;
    let mut k = 1;
    while k < 64 {
        let rs = ac.decode(r)?;
        let (run, size) = (usize::from(rs >> 4), rs & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break;
        }
        k += run;
        if k > 63 {
            return Err(CodecError::CorruptStream("AC run past end of block".into()));
        }
        out[usize::from(ZIGZAG_NATURAL[k])] = r.receive_extend(size) as i16;
        k += 1;
    }
    if r.overran() {
        return Err(CodecError::CorruptStream("entropy data truncated".into()));
    }
    Ok(())
}

/// Entropy-decodes a baseline stream into quantized coefficients.
pub fn decode_to_coefficients(bytes: &[u8]) -> Result<CoeffImage, CodecError> {
    let map = match parse::scan_segments(bytes) {
        Ok(m) => m,
        Err(parse::ParseError::TruncatedSegment { .. }) => {
            return Err(CodecError::CorruptStream("truncated marker segment".into()))
        }
        Err(e) => return Err(e.into()),
    };
    if map.has_arithmetic {
        return Err(CodecError::UnsupportedCoding("arithmetic coding".into()));
    }

    let mut qtables: [Option<QuantTable>; 4] = [None; 4];
    let mut dc_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut ac_tables: [Option<DecodeTable>; 4] = Default::default();
    let mut restart_interval = 0usize;
    let mut image: Option<CoeffImage> = None;
    let mut scans = 0;

    for (si, seg) in map.segments.iter().enumerate() {
        let payload = seg.payload(bytes);
        match seg.marker {
            DQT => {
                for rec in parse::parse_dqt_payload(payload, seg.offset)? {
                    qtables[usize::from(rec.table_id)] = Some(rec.table);
                }
            }
            DHT => parse_dht(payload, &mut dc_tables, &mut ac_tables)?,
            DRI => {
                if payload.len() < 2 {
                    return Err(CodecError::CorruptStream("short DRI segment".into()));
                }
                restart_interval = usize::from(u16::from_be_bytes([payload[0], payload[1]]));
            }
            m if parse::is_sof(m) => {
                if image.is_some() {
                    return Err(CodecError::UnsupportedCoding("multiple frames".into()));
                }
                image = Some(start_frame(m, payload, seg.offset)?);
            }
            SOS => {
                let img = image
                    .as_mut()
                    .ok_or_else(|| CodecError::CorruptStream("scan before frame header".into()))?;
                bind_tables(img, &qtables)?;
                let data = &bytes[seg.payload_end()..map.entropy_end(si, bytes.len())];
                decode_scan(img, payload, data, &dc_tables, &ac_tables, restart_interval)?;
                scans += 1;
            }
            _ => {}
        }
    }
    let img = image.ok_or(parse::ParseError::NoFrameHeader)?;
    if scans == 0 {
        return Err(CodecError::CorruptStream("no scan data".into()));
    }
    Ok(img)
}

fn parse_dht(
    mut p: &[u8],
    dc: &mut [Option<DecodeTable>; 4],
    ac: &mut [Option<DecodeTable>; 4],
) -> Result<(), CodecError> {
    while !p.is_empty() {
        if p.len() < 17 {
            return Err(CodecError::CorruptStream("short DHT segment".into()));
        }
        let (tc, th) = (p[0] >> 4, usize::from(p[0] & 0x0F));
        if tc > 1 || th > 3 {
            return Err(CodecError::CorruptStream("bad DHT class or id".into()));
        }
        let bits: [u8; 16] = p[1..17].try_into().expect("16 bytes");
        let n: usize = bits.iter().map(|&b| usize::from(b)).sum();
        if p.len() < 17 + n {
            return Err(CodecError::CorruptStream("short DHT values".into()));
        }
        let table = DecodeTable::new(&bits, &p[17..17 + n])?;
        if tc == 0 {
            dc[th] = Some(table);
        } else {
            ac[th] = Some(table);
        }
        p = &p[17 + n..];
    }
    Ok(())
}

fn start_frame(marker: u8, payload: &[u8], offset: usize) -> Result<CoeffImage, CodecError> {
    let info = match parse::parse_sof_payload(marker, payload, offset) {
        Ok(i) => i,
        Err(parse::ParseError::UnsupportedFrameType(m)) => {
            return Err(CodecError::UnsupportedCoding(format!("frame type 0x{m:02X}")))
        }
        Err(e) => return Err(e.into()),
    };
    match info.frame_type {
        FrameType::Baseline | FrameType::ExtendedHuffman => {}
        other => return Err(CodecError::UnsupportedCoding(format!("{other:?} frame"))),
    }
    if info.bit_depth != 8 {
        return Err(CodecError::UnsupportedCoding(format!("{}-bit samples", info.bit_depth)));
    }
    if !matches!(info.components.len(), 1 | 3) {
        return Err(CodecError::UnsupportedCoding(format!(
            "{} components",
            info.components.len()
        )));
    }
    let (w, h) = (u64::from(info.width), u64::from(info.height));
    if w * h > MAX_PIXELS {
        return Err(CodecError::ImageTooLarge { width: w, height: h });
    }
    let mh = info.components.iter().map(|c| c.h).max().unwrap_or(1);
    let mv = info.components.iter().map(|c| c.v).max().unwrap_or(1);
    if info
        .components
        .iter()
        .any(|c| mh % c.h != 0 || mv % c.v != 0)
    {
        return Err(CodecError::UnsupportedCoding("fractional sampling ratio".into()));
    }
    let mcux = (w as usize).div_ceil(8 * usize::from(mh));
    let mcuy = (h as usize).div_ceil(8 * usize::from(mv));
    let placeholder = QuantTable::new([1; 64], crate::qt::Precision::Bits8).expect("valid");
    let components = info
        .components
        .iter()
        .map(|c| {
            let (bw, bh) = (mcux * usize::from(c.h), mcuy * usize::from(c.v));
            CoeffComponent {
                id: c.id,
                h: c.h,
                v: c.v,
                table_id: c.table_id,
                table: placeholder,
                blocks_w: bw,
                blocks_h: bh,
                data: vec![0; bw * bh * 64],
            }
        })
        .collect();
    Ok(CoeffImage {
        width: info.width.into(),
        height: info.height.into(),
        components,
    })
}

fn bind_tables(img: &mut CoeffImage, qtables: &[Option<QuantTable>; 4]) -> Result<(), CodecError> {
    for c in &mut img.components {
        c.table = qtables[usize::from(c.table_id)].ok_or_else(|| {
            CodecError::CorruptStream(format!("quantization table {} not defined", c.table_id))
        })?;
    }
    Ok(())
}

fn decode_scan(
    img: &mut CoeffImage,
    header: &[u8],
    data: &[u8],
    dc_tables: &[Option<DecodeTable>; 4],
    ac_tables: &[Option<DecodeTable>; 4],
    restart_interval: usize,
) -> Result<(), CodecError> {
    let bad = |s: &str| CodecError::CorruptStream(s.to_owned());
    let ns = usize::from(*header.first().ok_or_else(|| bad("empty SOS"))?);
    if ns == 0 || ns > 4 || header.len() < 1 + 2 * ns + 3 {
        return Err(bad("malformed SOS header"));
    }
    let mut comps = Vec::with_capacity(ns);
    for i in 0..ns {
        let id = header[1 + 2 * i];
        let sel = header[2 + 2 * i];
        let index = img
            .components
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| bad("scan references unknown component"))?;
        let (dc, ac) = (usize::from(sel >> 4), usize::from(sel & 0x0F));
        if dc > 3 || ac > 3 || dc_tables[dc].is_none() || ac_tables[ac].is_none() {
            return Err(bad("scan references undefined Huffman table"));
        }
        comps.push(ScanComponent { index, dc, ac });
    }
    let (ss, se, a) = (header[1 + 2 * ns], header[2 + 2 * ns], header[3 + 2 * ns]);
    if ss != 0 || se != 63 || a != 0 {
        return Err(CodecError::UnsupportedCoding("spectral selection or successive approximation".into()));
    }

    // (component slot, bx, by) per MCU
    let mut units: Vec<Vec<(usize, usize, usize)>> = Vec::new();
    if ns == 1 {
        let (bw, bh) = img.coded_blocks(comps[0].index);
        for by in 0..bh {
            for bx in 0..bw {
                units.push(vec![(0, bx, by)]);
            }
        }
    } else {
        let (mh, mv) = (usize::from(img.max_h()), usize::from(img.max_v()));
        let mcux = (img.width as usize).div_ceil(8 * mh);
        let mcuy = (img.height as usize).div_ceil(8 * mv);
        for my in 0..mcuy {
            for mx in 0..mcux {
                let mut mcu = Vec::new();
                for (slot, sc) in comps.iter().enumerate() {
                    let c = &img.components[sc.index];
                    let (h, v) = (usize::from(c.h), usize::from(c.v));
                    for dy in 0..v {
                        for dx in 0..h {
                            mcu.push((slot, mx * h + dx, my * v + dy));
                        }
                    }
                }
                units.push(mcu);
            }
        }
    }

    let mut reader = BitReader::new(data);
    let mut preds = vec![0i32; ns];
    let total = units.len();
    for (i, mcu) in units.iter().enumerate() {
        for &(slot, bx, by) in mcu {
            let sc = &comps[slot];
            let dc = dc_tables[sc.dc].as_ref().expect("checked above");
            let ac = ac_tables[sc.ac].as_ref().expect("checked above");
            let block = img.components[sc.index].block_mut(bx, by);
            block.fill(0);
            decode_block(&mut reader, dc, ac, &mut preds[slot], block)?;
        }
        if restart_interval > 0 && (i + 1) % restart_interval == 0 && i + 1 < total {
            reader.restart((((i + 1) / restart_interval - 1) % 8) as u8)?;
            preds.iter_mut().for_each(|p| *p = 0);
        }
    }
    Ok(())
}

/// Dequantize, inverse DCT, level shift and round one component to samples
/// over its padded block grid.
fn component_samples(c: &CoeffComponent) -> Vec<u8> {
    let stride = c.blocks_w * 8;
    let mut out = vec![0u8; stride * c.blocks_h * 8];
    for by in 0..c.blocks_h {
        for bx in 0..c.blocks_w {
            let px = dct::idct_islow(c.block(bx, by), &c.table);
            for y in 0..8 {
                let row = (by * 8 + y) * stride + bx * 8;
                for x in 0..8 {
                    out[row + x] = px[y * 8 + x];
                }
            }
        }
    }
    out
}

/// Reconstructs pixels from quantized coefficients. Chroma planes are
/// upsampled by sample replication.
pub fn coefficients_to_pixels(img: &CoeffImage) -> Result<PixelImage, CodecError> {
    let (w, h) = (img.width as usize, img.height as usize);
    let (mh, mv) = (usize::from(img.max_h()), usize::from(img.max_v()));
    // (plane, stride, x divisor, y divisor) per component
    let planes: Vec<(Vec<u8>, usize, usize, usize)> = img
        .components
        .iter()
        .map(|c| {
            let samples = component_samples(c);
            let stride = c.blocks_w * 8;
            let (fx, fy) = (mh / usize::from(c.h), mv / usize::from(c.v));
            if (fx, fy) == (2, 2) && mh % usize::from(c.h) == 0 && mv % usize::from(c.v) == 0 {
                let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
                (upsample_h2v2(&samples, stride, cw, ch), cw * 2, 1, 1)
            } else {
                (samples, stride, 0, 0)
            }
        })
        .collect();
    let sample = |k: usize, x: usize, y: usize| {
        let (plane, stride, dx, _) = &planes[k];
        if *dx == 1 {
            return plane[y * stride + x];
        }
        let c = &img.components[k];
        let (sx, sy) = (x * usize::from(c.h) / mh, y * usize::from(c.v) / mv);
        plane[sy * stride + sx]
    };
    match img.components.len() {
        1 => {
            let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| sample(0, x, y)).collect();
            PixelImage::new(img.width, img.height, ColorModel::Gray, data)
        }
        3 => {
            let mut data = Vec::with_capacity(w * h * 3);
            for y in 0..h {
                for x in 0..w {
                    data.extend(ycbcr_to_rgb(sample(0, x, y), sample(1, x, y), sample(2, x, y)));
                }
            }
            PixelImage::new(img.width, img.height, ColorModel::Rgb, data)
        }
        n => Err(CodecError::UnsupportedCoding(format!("{n} components"))),
    }
}

/// Triangle-filter 2x2 upsampling of the `cw` x `ch` region of a plane,
/// with the same integer weights and rounding as libjpeg's h2v2 "fancy"
/// upsampler. Edge rows and columns are replicated.
fn upsample_h2v2(plane: &[u8], stride: usize, cw: usize, ch: usize) -> Vec<u8> {
    let ow = cw * 2;
    let mut out = vec![0u8; ow * ch * 2];
    let at = |r: usize, i: usize| u32::from(plane[r * stride + i]);
    for oy in 0..ch * 2 {
        let r = oy / 2;
        let n = if oy % 2 == 0 { r.saturating_sub(1) } else { (r + 1).min(ch - 1) };
        let colsum = |i: usize| at(r, i) * 3 + at(n, i);
        let row = &mut out[oy * ow..(oy + 1) * ow];
        for i in 0..cw {
            let this = colsum(i);
            let left = if i == 0 { this } else { colsum(i - 1) };
            let right = if i + 1 == cw { this } else { colsum(i + 1) };
            row[2 * i] = ((this * 3 + left + 8) >> 4) as u8;
            row[2 * i + 1] = ((this * 3 + right + 7) >> 4) as u8;
        }
    }
    out
}

/// Full decode to pixels.
pub fn decode(bytes: &[u8]) -> Result<PixelImage, CodecError> {
    coefficients_to_pixels(&decode_to_coefficients(bytes)?)
}
