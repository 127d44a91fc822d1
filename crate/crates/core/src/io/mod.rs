//! File formats and training-sample extraction.

mod bseq;
mod checkpoint;
mod patches;
mod pgm;

pub use bseq::{read_bseq, read_bseq_file, write_bseq, write_bseq_file, Dtype, BSEQ_HEADER_LEN};
pub use checkpoint::{load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file, Checkpoint};
pub use patches::{
    context_window, extract_patch_samples, grid_dims, patch_index, patch_sample, PatchIndex, PatchSample,
};
pub use pgm::{decode_pgm, encode_pgm, encode_trail, trail};

pub(crate) fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8], crate::DecodeError> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or(crate::DecodeError::Truncated {
            needed: pos.saturating_add(n),
            available: bytes.len(),
        })?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

pub(crate) fn take_u32(bytes: &[u8], pos: &mut usize) -> Result<u32, crate::DecodeError> {
    let b = take(bytes, pos, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}
