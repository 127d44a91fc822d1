use crate::error::{Error, Result};
use crate::image::BoundaryImage;
use crate::model::CmscConfig;
use crate::tensor::Tensor;

/// Position of one training sample: `t` is the last observed frame, the
/// target is frame `t + 1`; `(row, col)` is the grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchIndex {
    pub t: usize,
    pub row: usize,
    pub col: usize,
}

/// Model input window and next-frame target for one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    /// `n x context x context`, oldest frame first.
    pub frames: Tensor<f32>,
    /// `1 x patch x patch`.
    pub target: Tensor<f32>,
    pub index: PatchIndex,
}

/// Grid rows and columns; the image sides must be multiples of `patch`.
pub fn grid_dims(height: usize, width: usize, patch: usize) -> Result<(usize, usize)> {
    if patch == 0 || !height.is_multiple_of(patch) || !width.is_multiple_of(patch) {
        return Err(Error::shape(
            "patch_grid",
            format!("{height}x{width} is not divisible into {patch}-pixel patches"),
        ));
    }
    Ok((height / patch, width / patch))
}

/// All sample positions of a sequence, in `(t, row, col)` order.
pub fn patch_index(frames: &[BoundaryImage], config: &CmscConfig) -> Result<Vec<PatchIndex>> {
    let n = config.n_input_frames;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (rows, cols) = grid_dims(first.height(), first.width(), config.patch)?;
    if frames.len() < n + 1 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity((frames.len() - n) * rows * cols);
    for t in n - 1..frames.len() - 1 {
        for row in 0..rows {
            for col in 0..cols {
                out.push(PatchIndex { t, row, col });
            }
        }
    }
    Ok(out)
}

/// Cuts the `context`-sized window around cell `(row, col)` from the `n`
/// frames ending at `t`; pixels outside the image are zero.
pub fn context_window(frames: &[BoundaryImage], t: usize, row: usize, col: usize, config: &CmscConfig) -> Tensor<f32> {
    let (n, c, p) = (config.n_input_frames, config.context, config.patch);
    let off = config.patch_offset() as isize;
    let top = (row * p) as isize - off;
    let left = (col * p) as isize - off;
    let mut data = vec![0.0f32; n * c * c];
    for (k, dst) in data.chunks_exact_mut(c * c).enumerate() {
        frames[t + 1 - n + k].window_into(top, left, dst, c);
    }
    Tensor::from_vec(&[n, c, c], data).expect("sized above")
}

pub fn patch_sample(frames: &[BoundaryImage], index: PatchIndex, config: &CmscConfig) -> PatchSample {
    let p = config.patch;
    let target = frames[index.t + 1]
        .window((index.row * p) as isize, (index.col * p) as isize, p, p)
        .to_tensor();
    PatchSample {
        frames: context_window(frames, index.t, index.row, index.col, config),
        target,
        index,
    }
}

/// Every sample of the sequence; empty when it has fewer than `n + 1`
/// frames.
pub fn extract_patch_samples(frames: &[BoundaryImage], config: &CmscConfig) -> Result<Vec<PatchSample>> {
    Ok(patch_index(frames, config)?
        .into_iter()
        .map(|i| patch_sample(frames, i, config))
        .collect())
}
