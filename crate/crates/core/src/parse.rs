//! Marker-level JPEG scanning.
//!
//! Nothing here decodes entropy-coded data; quantization tables and frame
//! headers are read straight from the marker segments, so progressive and
//! arithmetic-coded files are handled as well as baseline ones.

use thiserror::Error;

use crate::qt::{Precision, QtError, QuantTable, TableRole};

pub const SOI: u8 = 0xD8;
pub const EOI: u8 = 0xD9;
pub const SOS: u8 = 0xDA;
pub const DQT: u8 = 0xDB;
pub const DHT: u8 = 0xC4;
pub const DRI: u8 = 0xDD;
pub const DAC: u8 = 0xCC;
pub const APP0: u8 = 0xE0;
pub const COM: u8 = 0xFE;
pub const SOF0: u8 = 0xC0;
pub const SOF1: u8 = 0xC1;
pub const SOF2: u8 = 0xC2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("buffer does not start with an SOI marker")]
    MissingSoi,
    #[error("segment at byte {offset} runs past the end of the buffer")]
    TruncatedSegment { offset: usize, partial: SegmentMap },
    #[error("DQT at byte {offset} declares precision nibble {pq}")]
    InvalidPrecision { offset: usize, pq: u8 },
    #[error("malformed segment at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("invalid quantization table at byte {offset}: {source}")]
    InvalidTable { offset: usize, source: QtError },
    #[error("no frame header found")]
    NoFrameHeader,
    #[error("unsupported frame type 0x{0:02X}")]
    UnsupportedFrameType(u8),
}

/// One marker occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub marker: u8,
    /// Offset of the 0xFF byte introducing the marker.
    pub offset: usize,
    /// Payload bytes after the two-byte length field (0 for standalone markers).
    pub length: usize,
}

impl Segment {
    pub fn has_length(marker: u8) -> bool {
        !matches!(marker, SOI | EOI | 0x01 | 0xD0..=0xD7)
    }

    pub fn payload_start(&self) -> usize {
        if Self::has_length(self.marker) {
            self.offset + 4
        } else {
            self.offset + 2
        }
    }

    pub fn payload_end(&self) -> usize {
        self.payload_start() + self.length
    }

    pub fn payload<'a>(&self, bytes: &'a [u8]) -> &'a [u8] {
        &bytes[self.payload_start()..self.payload_end()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SegmentMap {
    pub segments: Vec<Segment>,
    pub has_sof0: bool,
    pub has_sof2: bool,
    pub has_arithmetic: bool,
    pub truncated: bool,
}

impl SegmentMap {
    pub fn markers(&self) -> Vec<u8> {
        self.segments.iter().map(|s| s.marker).collect()
    }

    /// End of the entropy-coded data that follows segment `index` (an SOS).
    pub fn entropy_end(&self, index: usize, total_len: usize) -> usize {
        self.segments
            .get(index + 1)
            .map_or(total_len, |s| s.offset)
    }

    fn note(&mut self, seg: Segment) {
        match seg.marker {
            SOF0 => self.has_sof0 = true,
            SOF2 => self.has_sof2 = true,
            0xC9..=0xCB | 0xCD..=0xCF | DAC => self.has_arithmetic = true,
            _ => {}
        }
        self.segments.push(seg);
    }
}

/// Skips entropy-coded bytes starting at `pos`, returning the offset of the
/// next marker that is not a stuffed byte or a restart marker.
fn skip_entropy(bytes: &[u8], mut pos: usize) -> Option<usize> {
    while pos + 1 < bytes.len() {
        if bytes[pos] != 0xFF {
            pos += 1;
            continue;
        }
        match bytes[pos + 1] {
            0x00 | 0xD0..=0xD7 => pos += 2,
            0xFF => pos += 1,
            _ => return Some(pos),
        }
    }
    None
}

/// Enumerates every marker from SOI through EOI.
pub fn scan_segments(bytes: &[u8]) -> Result<SegmentMap, ParseError> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != SOI {
        return Err(ParseError::MissingSoi);
    }
    let mut map = SegmentMap::default();
    map.note(Segment {
        marker: SOI,
        offset: 0,
        length: 0,
    });
    let mut pos = 2;
    loop {
        // tolerate junk and fill bytes between segments
        while pos < bytes.len() && bytes[pos] != 0xFF {
            pos += 1;
        }
        while pos + 1 < bytes.len() && bytes[pos + 1] == 0xFF {
            pos += 1;
        }
        if pos + 1 >= bytes.len() {
            map.truncated = true;
            return Ok(map);
        }
        let marker = bytes[pos + 1];
        if marker == 0x00 {
            pos += 2;
            continue;
        }
        if !Segment::has_length(marker) {
            map.note(Segment {
                marker,
                offset: pos,
                length: 0,
            });
            if marker == EOI {
                return Ok(map);
            }
            pos += 2;
            continue;
        }
        if pos + 4 > bytes.len() {
            map.truncated = true;
            return Err(ParseError::TruncatedSegment {
                offset: pos,
                partial: map,
            });
        }
        let declared = usize::from(u16::from_be_bytes([bytes[pos + 2], bytes[pos + 3]]));
        if declared < 2 {
            return Err(ParseError::Malformed {
                offset: pos,
                reason: format!("length field {declared} is below 2"),
            });
        }
        let seg = Segment {
            marker,
            offset: pos,
            length: declared - 2,
        };
        if seg.payload_end() > bytes.len() {
            map.truncated = true;
            return Err(ParseError::TruncatedSegment {
                offset: pos,
                partial: map,
            });
        }
        map.note(seg);
        pos = seg.payload_end();
        if marker == SOS {
            match skip_entropy(bytes, pos) {
                Some(next) => pos = next,
                None => {
                    map.truncated = true;
                    return Ok(map);
                }
            }
        }
    }
}

/// One table definition found in a DQT segment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DqtRecord {
    pub table: QuantTable,
    pub table_id: u8,
    pub precision: Precision,
    pub segment_offset: usize,
}

/// Parses the payload of one DQT segment.
pub fn parse_dqt_payload(payload: &[u8], segment_offset: usize) -> Result<Vec<DqtRecord>, ParseError> {
    let mut out = Vec::new();
    let mut p = 0;
    while p < payload.len() {
        let pq = payload[p] >> 4;
        let tq = payload[p] & 0x0F;
        let precision = match pq {
            0 => Precision::Bits8,
            1 => Precision::Bits16,
            _ => {
                return Err(ParseError::InvalidPrecision {
                    offset: segment_offset,
                    pq,
                })
            }
        };
        if tq > 3 {
            return Err(ParseError::Malformed {
                offset: segment_offset,
                reason: format!("table id {tq} above 3"),
            });
        }
        p += 1;
        let width = if pq == 0 { 1 } else { 2 };
        if p + 64 * width > payload.len() {
            return Err(ParseError::Malformed {
                offset: segment_offset,
                reason: "table data shorter than 64 entries".into(),
            });
        }
        let zz: [u16; 64] = std::array::from_fn(|i| {
            if width == 1 {
                u16::from(payload[p + i])
            } else {
                u16::from_be_bytes([payload[p + 2 * i], payload[p + 2 * i + 1]])
            }
        });
        p += 64 * width;
        let table = QuantTable::from_zigzag(zz, precision).map_err(|source| ParseError::InvalidTable {
            offset: segment_offset,
            source,
        })?;
        out.push(DqtRecord {
            table,
            table_id: tq,
            precision,
            segment_offset,
        });
    }
    Ok(out)
}

/// Every table definition in the file, in stream order, natural-order values.
///
/// The authoritative table of the first frame component (the last
/// definition of its id before the first SOS) is tagged luminance; the
/// authoritative tables bound to other components are tagged chrominance.
pub fn extract_dqt(bytes: &[u8]) -> Result<Vec<DqtRecord>, ParseError> {
    let map = scan_segments(bytes)?;
    let mut records = Vec::new();
    let mut first_sos = None;
    for (i, seg) in map.segments.iter().enumerate() {
        if seg.marker == DQT {
            let recs = parse_dqt_payload(seg.payload(bytes), seg.offset)?;
            records.extend(recs.into_iter().map(|r| (i, r)));
        } else if seg.marker == SOS && first_sos.is_none() {
            first_sos = Some(i);
        }
    }
    let frame = frame_info_from_map(bytes, &map).ok();
    let bound: Vec<u8> = match &frame {
        Some(f) => f.components.iter().map(|c| c.table_id).collect(),
        None => vec![0],
    };
    let cutoff = first_sos.unwrap_or(usize::MAX);
    let authoritative = |id: u8| {
        records
            .iter()
            .rposition(|(seg_idx, r)| *seg_idx < cutoff && r.table_id == id)
            .or_else(|| records.iter().rposition(|(_, r)| r.table_id == id))
    };
    let mut roles = vec![TableRole::Unspecified; records.len()];
    for (k, &id) in bound.iter().enumerate().rev() {
        if let Some(idx) = authoritative(id) {
            roles[idx] = if k == 0 {
                TableRole::Luminance
            } else {
                TableRole::Chrominance
            };
        }
    }
    Ok(records
        .into_iter()
        .zip(roles)
        .map(|((_, mut r), role)| {
            r.table = r.table.with_role(role);
            r
        })
        .collect())
}

/// The authoritative luminance table of a file.
pub fn luminance_table(bytes: &[u8]) -> Result<DqtRecord, ParseError> {
    extract_dqt(bytes)?
        .into_iter()
        .find(|r| r.table.role() == TableRole::Luminance)
        .ok_or_else(|| ParseError::Malformed {
            offset: 0,
            reason: "no quantization table bound to the luminance component".into(),
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameType {
    Baseline,
    ExtendedHuffman,
    Progressive,
    ExtendedArithmetic,
    ProgressiveArithmetic,
}

impl FrameType {
    pub fn from_marker(marker: u8) -> Option<Self> {
        Some(match marker {
            0xC0 => FrameType::Baseline,
            0xC1 => FrameType::ExtendedHuffman,
            0xC2 => FrameType::Progressive,
            0xC9 => FrameType::ExtendedArithmetic,
            0xCA => FrameType::ProgressiveArithmetic,
            _ => return None,
        })
    }
}

/// Any SOFn marker (excluding DHT, JPG and DAC which share the range).
pub fn is_sof(marker: u8) -> bool {
    matches!(marker, 0xC0..=0xCF) && !matches!(marker, DHT | 0xC8 | DAC)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComponentInfo {
    pub id: u8,
    pub h: u8,
    pub v: u8,
    pub table_id: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameInfo {
    pub frame_type: FrameType,
    pub width: u16,
    pub height: u16,
    pub bit_depth: u8,
    pub components: Vec<ComponentInfo>,
}

pub fn parse_sof_payload(marker: u8, payload: &[u8], offset: usize) -> Result<FrameInfo, ParseError> {
    let frame_type = FrameType::from_marker(marker).ok_or(ParseError::UnsupportedFrameType(marker))?;
    let bad = |reason: &str| ParseError::Malformed {
        offset,
        reason: reason.to_owned(),
    };
    if payload.len() < 6 {
        return Err(bad("frame header shorter than 6 bytes"));
    }
    let bit_depth = payload[0];
    let height = u16::from_be_bytes([payload[1], payload[2]]);
    let width = u16::from_be_bytes([payload[3], payload[4]]);
    let n = usize::from(payload[5]);
    if !(1..=4).contains(&n) {
        return Err(bad("component count outside 1..=4"));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero frame dimension"));
    }
    if payload.len() < 6 + 3 * n {
        return Err(bad("component list truncated"));
    }
    let components = (0..n)
        .map(|i| {
            let c = &payload[6 + 3 * i..9 + 3 * i];
            ComponentInfo {
                id: c[0],
                h: c[1] >> 4,
                v: c[1] & 0x0F,
                table_id: c[2],
            }
        })
        .collect::<Vec<_>>();
    if components
        .iter()
        .any(|c| !(1..=4).contains(&c.h) || !(1..=4).contains(&c.v) || c.table_id > 3)
    {
        return Err(bad("invalid sampling factor or table id"));
    }
    Ok(FrameInfo {
        frame_type,
        width,
        height,
        bit_depth,
        components,
    })
}

fn frame_info_from_map(bytes: &[u8], map: &SegmentMap) -> Result<FrameInfo, ParseError> {
    let seg = map
        .segments
        .iter()
        .find(|s| is_sof(s.marker))
        .ok_or(ParseError::NoFrameHeader)?;
    parse_sof_payload(seg.marker, seg.payload(bytes), seg.offset)
}

/// Dimensions and component bindings from the first frame header.
pub fn extract_frame_info(bytes: &[u8]) -> Result<FrameInfo, ParseError> {
    let map = match scan_segments(bytes) {
        Ok(m) => m,
        Err(ParseError::TruncatedSegment { partial, .. }) => partial,
        Err(e) => return Err(e),
    };
    frame_info_from_map(bytes, &map)
}

/// True when the buffer starts with the JPEG SOI marker and a marker prefix.
pub fn has_jpeg_magic(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && bytes[0] == 0xFF && bytes[1] == SOI && bytes[2] == 0xFF
}
