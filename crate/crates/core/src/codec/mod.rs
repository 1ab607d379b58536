//! Baseline sequential JPEG codec.
//!
//! The encoder takes caller-supplied quantization tables and always writes the
//! Annex K Huffman tables. The decoder handles baseline and extended
//! sequential Huffman frames with 8-bit samples; progressive, arithmetic,
//! lossless and 12-bit streams are rejected with [`CodecError::UnsupportedCoding`].
//! [`decode`] is [`decode_to_coefficients`] followed by
//! [`coefficients_to_pixels`], so both paths share one arithmetic definition.

mod color;
pub mod dct;
mod decode;
mod encode;
pub mod huffman;

use thiserror::Error;

use crate::qt::QuantTable;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dct::{dequantize_block, fdct_8x8, idct_8x8, idct_islow, quantize_block};
pub use decode::{coefficients_to_pixels, decode, decode_to_coefficients};
pub use encode::{encode, encode_coefficients, to_coefficients};

/// Largest decodable frame, in pixels.
pub const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unsupported coding: {0}")]
    UnsupportedCoding(String),
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("image {width}x{height} is too large")]
    ImageTooLarge { width: u64, height: u64 },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Parse(#[from] crate::parse::ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColorModel {
    Gray,
    Rgb,
}

impl ColorModel {
    pub fn channels(self) -> usize {
        match self {
            ColorModel::Gray => 1,
            ColorModel::Rgb => 3,
        }
    }
}

/// 8-bit image, row-major, samples interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelImage {
    width: u32,
    height: u32,
    color: ColorModel,
    data: Vec<u8>,
}

impl PixelImage {
    pub fn new(width: u32, height: u32, color: ColorModel, data: Vec<u8>) -> Result<Self, CodecError> {
        if width == 0 || height == 0 {
            return Err(CodecError::InvalidImage("zero dimension".into()));
        }
        let expected = width as usize * height as usize * color.channels();
        if data.len() != expected {
            return Err(CodecError::InvalidImage(format!(
                "expected {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            color,
            data,
        })
    }

    pub fn from_fn_gray(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, ColorModel::Gray, data).expect("dimensions match")
    }

    pub fn from_fn_rgb(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .flat_map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, ColorModel::Rgb, data).expect("dimensions match")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn color(&self) -> ColorModel {
        self.color
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.color.channels();
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    /// BT.601 luma per pixel, rounded half away from zero.
    pub fn luma(&self) -> Vec<u8> {
        match self.color {
            ColorModel::Gray => self.data.clone(),
            ColorModel::Rgb => self
                .data
                .chunks_exact(3)
                .map(|p| rgb_to_ycbcr(p[0], p[1], p[2])[0].round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    pub fn to_gray(&self) -> PixelImage {
        PixelImage {
            width: self.width,
            height: self.height,
            color: ColorModel::Gray,
            data: self.luma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Subsampling {
    S444,
    #[default]
    S420,
}

impl Subsampling {
    pub fn label(self) -> &'static str {
        match self {
            Subsampling::S444 => "444",
            Subsampling::S420 => "420",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "444" | "4:4:4" => Some(Subsampling::S444),
            "420" | "4:2:0" => Some(Subsampling::S420),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodeParams {
    pub luminance: QuantTable,
    /// Ignored for grayscale images.
    pub chrominance: QuantTable,
    pub subsampling: Subsampling,
    /// Restart interval in MCUs; `None` or `Some(0)` disables restarts.
    pub restart_interval: Option<u16>,
}

impl EncodeParams {
    pub fn new(luminance: QuantTable, chrominance: QuantTable) -> Self {
        Self {
            luminance,
            chrominance,
            subsampling: Subsampling::default(),
            restart_interval: None,
        }
    }

    pub fn subsampling(mut self, s: Subsampling) -> Self {
        self.subsampling = s;
        self
    }

    pub fn restart_interval(mut self, mcus: u16) -> Self {
        self.restart_interval = Some(mcus);
        self
    }
}

/// Quantized coefficients of one component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffComponent {
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub table_id: u8,
    pub table: QuantTable,
    /// Padded block grid (a whole number of MCUs).
    pub blocks_w: usize,
    pub blocks_h: usize,
    /// `blocks_w * blocks_h` blocks of 64 natural-order values, block-raster layout.
    pub data: Vec<i16>,
}

impl CoeffComponent {
    pub fn block(&self, bx: usize, by: usize) -> &[i16; 64] {
        let i = (by * self.blocks_w + bx) * 64;
        self.data[i..i + 64].try_into().expect("64-value block")
    }

    pub fn block_mut(&mut self, bx: usize, by: usize) -> &mut [i16; 64] {
        let i = (by * self.blocks_w + bx) * 64;
        (&mut self.data[i..i + 64]).try_into().expect("64-value block")
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[i16; 64]> {
        self.data
            .chunks_exact(64)
            .map(|c| c.try_into().expect("64-value block"))
    }
}

/// Quantized DCT coefficients exactly as stored in a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffImage {
    pub width: u32,
    pub height: u32,
    pub components: Vec<CoeffComponent>,
}

impl CoeffImage {
    pub fn max_h(&self) -> u8 {
        self.components.iter().map(|c| c.h).max().unwrap_or(1)
    }

    pub fn max_v(&self) -> u8 {
        self.components.iter().map(|c| c.v).max().unwrap_or(1)
    }

    /// Blocks of component `idx` that cover image content (no MCU padding).
    pub fn coded_blocks(&self, idx: usize) -> (usize, usize) {
        let c = &self.components[idx];
        let (mh, mv) = (u64::from(self.max_h()), u64::from(self.max_v()));
        let cw = (u64::from(self.width) * u64::from(c.h)).div_ceil(mh);
        let ch = (u64::from(self.height) * u64::from(c.v)).div_ceil(mv);
        (cw.div_ceil(8) as usize, ch.div_ceil(8) as usize)
    }

    pub fn luminance(&self) -> &CoeffComponent {
        &self.components[0]
    }
}
