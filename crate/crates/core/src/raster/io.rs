//! `SNUR v1` raster files plus CSV and PGM exports.
//!
//! Header (24 bytes, little-endian):
//!
//! | offset | size | field                                                    |
//! |--------|------|----------------------------------------------------------|
//! | 0      | 4    | magic `"SNUR"`                                           |
//! | 4      | 2    | version `u16 = 1`                                        |
//! | 6      | 1    | dtype: 0 = f32, 1 = i32, 2 = f64                         |
//! | 7      | 1    | kind: 0 wrapped, 1 absolute, 2 coherence, 3 wrap count   |
//! | 8      | 4    | width `u32`                                              |
//! | 12     | 4    | height `u32`                                             |
//! | 16     | 8    | reserved `u64 = 0`                                       |
//!
//! followed by `width * height` row-major values of the declared dtype.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CoherenceRaster, PhaseKind, PhaseRaster, WrapCountRaster};
use crate::error::{FormatError, Result};

pub const MAGIC: [u8; 4] = *b"SNUR";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    F32 = 0,
    I32 = 1,
    F64 = 2,
}

impl Dtype {
    fn from_code(c: u8) -> Result<Self, FormatError> {
        match c {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::I32),
            2 => Ok(Dtype::F64),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 | Dtype::I32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RasterKind {
    Wrapped = 0,
    Absolute = 1,
    Coherence = 2,
    WrapCount = 3,
}

impl RasterKind {
    fn from_code(c: u8) -> Result<Self, FormatError> {
        match c {
            0 => Ok(RasterKind::Wrapped),
            1 => Ok(RasterKind::Absolute),
            2 => Ok(RasterKind::Coherence),
            3 => Ok(RasterKind::WrapCount),
            other => Err(FormatError::UnknownKind(other)),
        }
    }
}

/// Any raster the file format can hold.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyRaster {
    Phase(PhaseRaster),
    Coherence(CoherenceRaster),
    WrapCount(WrapCountRaster),
}

impl AnyRaster {
    pub fn kind(&self) -> RasterKind {
        match self {
            AnyRaster::Phase(p) => match p.kind() {
                PhaseKind::Wrapped => RasterKind::Wrapped,
                PhaseKind::Absolute => RasterKind::Absolute,
            },
            AnyRaster::Coherence(_) => RasterKind::Coherence,
            AnyRaster::WrapCount(_) => RasterKind::WrapCount,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            AnyRaster::Phase(p) => p.width(),
            AnyRaster::Coherence(c) => c.width(),
            AnyRaster::WrapCount(k) => k.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            AnyRaster::Phase(p) => p.height(),
            AnyRaster::Coherence(c) => c.height(),
            AnyRaster::WrapCount(k) => k.height(),
        }
    }

    pub fn default_dtype(&self) -> Dtype {
        match self {
            AnyRaster::WrapCount(_) => Dtype::I32,
            _ => Dtype::F64,
        }
    }

    /// Values as `f64` in row-major order.
    pub fn values_f64(&self) -> Vec<f64> {
        match self {
            AnyRaster::Phase(p) => p.values().to_vec(),
            AnyRaster::Coherence(c) => c.values().to_vec(),
            AnyRaster::WrapCount(k) => k.values().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn into_phase(self) -> Option<PhaseRaster> {
        match self {
            AnyRaster::Phase(p) => Some(p),
            _ => None,
        }
    }

    pub fn into_coherence(self) -> Option<CoherenceRaster> {
        match self {
            AnyRaster::Coherence(c) => Some(c),
            _ => None,
        }
    }

    pub fn into_wrap_count(self) -> Option<WrapCountRaster> {
        match self {
            AnyRaster::WrapCount(k) => Some(k),
            _ => None,
        }
    }
}

impl From<PhaseRaster> for AnyRaster {
    fn from(p: PhaseRaster) -> Self {
        AnyRaster::Phase(p)
    }
}

impl From<CoherenceRaster> for AnyRaster {
    fn from(c: CoherenceRaster) -> Self {
        AnyRaster::Coherence(c)
    }
}

impl From<WrapCountRaster> for AnyRaster {
    fn from(k: WrapCountRaster) -> Self {
        AnyRaster::WrapCount(k)
    }
}

pub fn encode_raster(raster: &AnyRaster, dtype: Dtype) -> Result<Vec<u8>, FormatError> {
    let kind = raster.kind();
    let int_kind = kind == RasterKind::WrapCount;
    if int_kind != (dtype == Dtype::I32) {
        return Err(FormatError::DtypeKindMismatch { dtype: dtype as u8, kind: kind as u8 });
    }
    let (w, h) = (raster.width(), raster.height());
    let mut out = Vec::with_capacity(HEADER_LEN + w * h * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(dtype as u8);
    out.push(kind as u8);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&0u64.to_le_bytes());
    match (raster, dtype) {
        (AnyRaster::WrapCount(k), _) => k.values().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        (r, Dtype::F32) => r.values_f64().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        (r, _) => r.values_f64().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode_raster(bytes: &[u8]) -> Result<AnyRaster> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated { expected: HEADER_LEN, found: bytes.len() }.into());
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic { expected: MAGIC, found: magic }.into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(FormatError::VersionMismatch { expected: VERSION, found: version }.into());
    }
    let dtype = Dtype::from_code(bytes[6])?;
    let kind = RasterKind::from_code(bytes[7])?;
    if (kind == RasterKind::WrapCount) != (dtype == Dtype::I32) {
        return Err(FormatError::DtypeKindMismatch { dtype: bytes[6], kind: bytes[7] }.into());
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as u64;
    let h = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as u64;
    let payload_len = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(dtype.size() as u64))
        .and_then(|n| usize::try_from(n).ok())
        .and_then(|n| n.checked_add(HEADER_LEN).map(|_| n))
        .ok_or(FormatError::DimensionOverflow { width: w, height: h })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(FormatError::Truncated { expected: payload_len, found: payload.len() }.into());
    }
    if payload.len() > payload_len {
        return Err(FormatError::TrailingBytes(payload.len() - payload_len).into());
    }
    let (w, h) = (w as usize, h as usize);
    let floats = || -> Vec<f64> {
        match dtype {
            Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
            _ => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        }
    };
    Ok(match kind {
        RasterKind::Wrapped => AnyRaster::Phase(PhaseRaster::new(w, h, floats(), PhaseKind::Wrapped)?),
        RasterKind::Absolute => AnyRaster::Phase(PhaseRaster::new(w, h, floats(), PhaseKind::Absolute)?),
        RasterKind::Coherence => AnyRaster::Coherence(CoherenceRaster::new(w, h, floats())?),
        RasterKind::WrapCount => AnyRaster::WrapCount(WrapCountRaster::new(
            w,
            h,
            payload.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect(),
        )?),
    })
}

/// Writes with the lossless dtype for the raster (f64 for phase/coherence, i32 for counts).
pub fn write_raster(raster: &AnyRaster, path: impl AsRef<Path>) -> Result<()> {
    write_raster_as(raster, raster.default_dtype(), path)
}

pub fn write_raster_as(raster: &AnyRaster, dtype: Dtype, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_raster(raster, dtype)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<AnyRaster> {
    decode_raster(&fs::read(path)?)
}

/// `x,y,value` rows, one per pixel.
pub fn write_csv(raster: &AnyRaster, mut out: impl Write) -> Result<()> {
    writeln!(out, "x,y,value")?;
    let w = raster.width();
    for (i, v) in raster.values_f64().iter().enumerate() {
        writeln!(out, "{},{},{}", i % w, i / w, v)?;
    }
    Ok(())
}

/// Binary 8-bit PGM with min-max scaling; constant rasters map to 0.
pub fn write_pgm(raster: &AnyRaster, mut out: impl Write) -> Result<()> {
    let values = raster.values_f64();
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    write!(out, "P5\n{} {}\n255\n", raster.width(), raster.height())?;
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 })
        .collect();
    out.write_all(&pixels)?;
    Ok(())
}
