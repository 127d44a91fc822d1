//! Single-channel boundary confidence maps.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `height x width` grid of boundary confidences in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl BoundaryImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        BoundaryImage {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                "boundary_image",
                format!("{height}x{width} needs {} values, got {}", height * width, data.len()),
            ));
        }
        Ok(BoundaryImage { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        BoundaryImage { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Number of pixels with value `>= threshold`.
    pub fn count_at_least(&self, threshold: f32) -> usize {
        self.data.iter().filter(|&&v| v >= threshold).count()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// `v >= threshold` as a 0/1 image.
    pub fn binarize(&self, threshold: f32) -> BoundaryImage {
        BoundaryImage {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|&v| (0.0..=1.0).contains(&v))
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
    }

    pub fn check_same_dims(&self, other: &BoundaryImage, op: &'static str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(())
    }

    /// Window of size `h x w` with top-left corner `(top, left)`, which may
    /// lie partly outside the image; outside pixels read as zero.
    pub fn window(&self, top: isize, left: isize, h: usize, w: usize) -> BoundaryImage {
        let mut out = BoundaryImage::zeros(h, w);
        self.window_into(top, left, &mut out.data, w);
        out
    }

    /// Writes the zero-padded window into `dst` (row stride `w`).
    pub(crate) fn window_into(&self, top: isize, left: isize, dst: &mut [f32], w: usize) {
        let h = dst.len() / w;
        let x0 = (-left).max(0) as usize;
        let x1 = (self.width as isize - left).clamp(0, w as isize) as usize;
        for y in 0..h {
            let sy = top + y as isize;
            let row = &mut dst[y * w..(y + 1) * w];
            if sy < 0 || sy >= self.height as isize || x0 >= x1 {
                row.fill(0.0);
                continue;
            }
            row[..x0].fill(0.0);
            row[x1..].fill(0.0);
            let src = sy as usize * self.width;
            let sx0 = (left + x0 as isize) as usize;
            row[x0..x1].copy_from_slice(&self.data[src + sx0..src + sx0 + (x1 - x0)]);
        }
    }

    /// Copies `patch` into this image with its top-left corner at `(top, left)`.
    pub fn paste(&mut self, patch: &BoundaryImage, top: usize, left: usize) -> Result<()> {
        if top + patch.height > self.height || left + patch.width > self.width {
            return Err(Error::shape("paste", "patch exceeds the image"));
        }
        for y in 0..patch.height {
            let dst = (top + y) * self.width + left;
            self.data[dst..dst + patch.width].copy_from_slice(&patch.data[y * patch.width..(y + 1) * patch.width]);
        }
        Ok(())
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(&[1, self.height, self.width], self.data.clone()).expect("consistent dims")
    }

    /// Accepts `1 x H x W` or `H x W` tensors.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        match t.shape()[..] {
            [1, h, w] | [h, w] => BoundaryImage::from_vec(h, w, t.data().to_vec()),
            _ => Err(Error::shape(
                "boundary_image",
                format!("not a single plane: {:?}", t.shape()),
            )),
        }
    }
}
