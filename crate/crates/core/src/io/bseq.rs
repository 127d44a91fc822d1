use std::path::Path;

use crate::error::{DecodeError, Error, Result};
use crate::image::BoundaryImage;

use super::{take, take_u32};

const MAGIC: &[u8; 4] = b"BSEQ";
const VERSION: u8 = 1;

/// Magic, version, three u32 dimensions and the dtype tag.
pub const BSEQ_HEADER_LEN: usize = 4 + 1 + 12 + 1;

/// Per-pixel storage of a sequence file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    /// One byte per pixel, `k` meaning `k / 255`.
    U8,
    /// Little-endian 32-bit float.
    F32,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::F32 => 1,
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 => 4,
        }
    }
}

/// Encodes equally sized frames with values in `[0, 1]`.
pub fn write_bseq(frames: &[BoundaryImage], dtype: Dtype) -> Result<Vec<u8>> {
    let (h, w) = frames.first().map_or((0, 0), |f| f.dims());
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::InvalidData(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(BSEQ_HEADER_LEN + frames.len() * h * w * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&dim(frames.len())?.to_le_bytes());
    out.extend_from_slice(&dim(h)?.to_le_bytes());
    out.extend_from_slice(&dim(w)?.to_le_bytes());
    out.push(dtype.tag());
    for (i, f) in frames.iter().enumerate() {
        if f.dims() != (h, w) {
            return Err(Error::shape(
                "write_bseq",
                format!("frame {i} is {:?}, expected {:?}", f.dims(), (h, w)),
            ));
        }
        if !f.in_unit_range() {
            return Err(Error::InvalidData(format!("frame {i} has values outside [0, 1]")));
        }
        match dtype {
            Dtype::U8 => out.extend(f.data().iter().map(|&v| (v * 255.0).round() as u8)),
            Dtype::F32 => {
                for &v in f.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    Ok(out)
}

/// Decodes a sequence file. Every malformed input yields a [`DecodeError`].
pub fn read_bseq(bytes: &[u8]) -> Result<Vec<BoundaryImage>, DecodeError> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4)? != MAGIC {
        return Err(DecodeError::BadMagic { expected: "BSEQ" });
    }
    let version = take(bytes, &mut pos, 1)?[0];
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let n = take_u32(bytes, &mut pos)? as usize;
    let h = take_u32(bytes, &mut pos)? as usize;
    let w = take_u32(bytes, &mut pos)? as usize;
    let dtype = match take(bytes, &mut pos, 1)?[0] {
        0 => Dtype::U8,
        1 => Dtype::F32,
        t => return Err(DecodeError::UnknownDtype(t)),
    };
    let plane = h.checked_mul(w);
    let needed = plane
        .and_then(|p| p.checked_mul(n))
        .and_then(|p| p.checked_mul(dtype.size()))
        .ok_or_else(|| DecodeError::Header(format!("{n}x{h}x{w} overflows")))?;
    let payload = take(bytes, &mut pos, needed)?;
    if pos != bytes.len() {
        return Err(DecodeError::TrailingBytes(bytes.len() - pos));
    }
    let plane = plane.unwrap_or(0);
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let data: Vec<f32> = match dtype {
            Dtype::U8 => payload[i * plane..(i + 1) * plane]
                .iter()
                .map(|&b| b as f32 / 255.0)
                .collect(),
            Dtype::F32 => payload[i * plane * 4..(i + 1) * plane * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        };
        if let Some(j) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DecodeError::OutOfRange { index: i * plane + j });
        }
        frames.push(BoundaryImage::from_vec(h, w, data).expect("sized from header"));
    }
    Ok(frames)
}

pub fn write_bseq_file(path: impl AsRef<Path>, frames: &[BoundaryImage], dtype: Dtype) -> Result<()> {
    std::fs::write(path, write_bseq(frames, dtype)?)?;
    Ok(())
}

pub fn read_bseq_file(path: impl AsRef<Path>) -> Result<Vec<BoundaryImage>> {
    Ok(read_bseq(&std::fs::read(path)?)?)
}
