//! Binary PGM (P5) and PPM (P6) reading and writing.
//!
//! 8-bit images map onto [`PixelImage`]; 16-bit P5 (maxval 65535) is the
//! probability-map interchange format, see [`write_pgm16`].

use thiserror::Error;

use crate::codec::{ColorModel, PixelImage};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PnmError {
    #[error("not a binary PGM/PPM file")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}")]
    Maxval(u32),
    #[error("pixel data truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmHeader {
    pub magic: [u8; 2],
    pub width: u32,
    pub height: u32,
    pub maxval: u32,
    pub data_offset: usize,
}

pub fn has_pnm_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && bytes[0] == b'P' && matches!(bytes[1], b'5' | b'6') && bytes[2].is_ascii_whitespace()
}

pub fn parse_header(bytes: &[u8]) -> Result<PnmHeader, PnmError> {
    if !has_pnm_magic(bytes) {
        return Err(PnmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text
            .parse()
            .map_err(|_| PnmError::Header(format!("expected a number at byte {start}")))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PnmError::Header("missing separator before raster".into()));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(PnmError::Header("zero dimension".into()));
    }
    Ok(PnmHeader {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval,
        data_offset: pos + 1,
    })
}

fn raster<'a>(bytes: &'a [u8], h: &PnmHeader, bytes_per_pixel: usize) -> Result<&'a [u8], PnmError> {
    let need = h.width as usize * h.height as usize * bytes_per_pixel;
    let have = bytes.len().saturating_sub(h.data_offset);
    if have < need {
        return Err(PnmError::Truncated { need, have });
    }
    Ok(&bytes[h.data_offset..h.data_offset + need])
}

/// Reads an 8-bit P5 or P6 image.
pub fn read_pnm(bytes: &[u8]) -> Result<PixelImage, PnmError> {
    let h = parse_header(bytes)?;
    if h.maxval != 255 {
        return Err(PnmError::Maxval(h.maxval));
    }
    let color = if h.magic[1] == b'5' {
        ColorModel::Gray
    } else {
        ColorModel::Rgb
    };
    let data = raster(bytes, &h, color.channels())?.to_vec();
    Ok(PixelImage::new(h.width, h.height, color, data).expect("size checked"))
}

pub fn write_pnm(img: &PixelImage) -> Vec<u8> {
    let magic = match img.color() {
        ColorModel::Gray => "P5",
        ColorModel::Rgb => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// 16-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray16 {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u16>,
}

/// Reads a P5 file at either bit depth, widening 8-bit samples unchanged.
pub fn read_pgm_any(bytes: &[u8]) -> Result<(Gray16, u32), PnmError> {
    let h = parse_header(bytes)?;
    if h.magic[1] != b'5' {
        return Err(PnmError::BadMagic);
    }
    let data = match h.maxval {
        1..=255 => raster(bytes, &h, 1)?.iter().map(|&b| u16::from(b)).collect(),
        256..=65535 => raster(bytes, &h, 2)?
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        m => return Err(PnmError::Maxval(m)),
    };
    Ok((
        Gray16 {
            width: h.width,
            height: h.height,
            data,
        },
        h.maxval,
    ))
}

/// P5, maxval 65535, big-endian samples.
pub fn write_pgm16(img: &Gray16) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 2);
    for v in &img.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}
