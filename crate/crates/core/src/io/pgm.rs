use crate::error::{DecodeError, Error, Result};
use crate::image::BoundaryImage;

/// Per-pixel maximum over the frames.
pub fn trail(frames: &[BoundaryImage]) -> Result<BoundaryImage> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidData("trail of an empty sequence".into()))?;
    let mut out = first.clone();
    for f in &frames[1..] {
        out.check_same_dims(f, "trail")?;
        for (o, &v) in out.data_mut().iter_mut().zip(f.data()) {
            *o = o.max(v);
        }
    }
    Ok(out)
}

/// Binary graymap with maxval 255; values are clamped to `[0, 1]` first.
pub fn encode_pgm(image: &BoundaryImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn encode_trail(frames: &[BoundaryImage]) -> Result<Vec<u8>> {
    Ok(encode_pgm(&trail(frames)?))
}

/// Reads the binary graymap variant with maxval 255 and single-byte
/// whitespace separators, as written by [`encode_pgm`].
pub fn decode_pgm(bytes: &[u8]) -> Result<BoundaryImage, DecodeError> {
    if !bytes.starts_with(b"P5") {
        return Err(DecodeError::BadMagic { expected: "P5" });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        while bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
            pos += 1;
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DecodeError::Header("graymap dimensions".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(DecodeError::Header(format!("maxval {maxval}")));
    }
    pos += 1;
    let needed = w
        .checked_mul(h)
        .ok_or_else(|| DecodeError::Header("size overflows".into()))?;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() < needed {
        return Err(DecodeError::Truncated {
            needed: pos + needed,
            available: bytes.len(),
        });
    }
    if payload.len() > needed {
        return Err(DecodeError::TrailingBytes(payload.len() - needed));
    }
    Ok(BoundaryImage::from_vec(h, w, payload.iter().map(|&b| b as f32 / 255.0).collect()).expect("sized"))
}
