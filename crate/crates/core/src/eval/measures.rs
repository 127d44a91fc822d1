use crate::error::{Error, Result};
use crate::image::BoundaryImage;
use crate::ops::mse_loss;

/// Mean squared difference, in f64.
pub fn mse_metric(pred: &BoundaryImage, gt: &BoundaryImage) -> Result<f64> {
    pred.check_same_dims(gt, "mse_metric")?;
    let cast = |i: &BoundaryImage| i.to_tensor().cast::<f64>();
    mse_loss(&cast(pred), &cast(gt))
}

/// Mean absolute response of the 4-neighbour Laplacian over interior pixels.
pub fn laplacian_sharpness(image: &BoundaryImage) -> Result<f64> {
    let (h, w) = image.dims();
    if h < 3 || w < 3 {
        return Err(Error::shape(
            "laplacian_sharpness",
            format!("{h}x{w} is smaller than 3x3"),
        ));
    }
    let v = |y: usize, x: usize| image.get(y, x) as f64;
    let mut sum = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            sum += (v(y - 1, x) + v(y + 1, x) + v(y, x - 1) + v(y, x + 1) - 4.0 * v(y, x)).abs();
        }
    }
    Ok(sum / ((h - 2) * (w - 2)) as f64)
}

/// Mean absolute error per ring of Chebyshev distance from the patch border.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorProfile {
    /// `bins[d]` is the mean over pixels at distance `d`, `0..patch/2`.
    pub bins: Vec<f64>,
    pub counts: Vec<usize>,
}

impl ErrorProfile {
    pub fn border(&self) -> f64 {
        self.bins[0]
    }

    pub fn center(&self) -> f64 {
        *self.bins.last().expect("nonempty profile")
    }

    /// Largest bin over smallest bin; infinite if some bin is zero while
    /// another is not, 1 when all are zero.
    pub fn spread(&self) -> f64 {
        let max = self.bins.iter().copied().fold(0.0, f64::max);
        let min = self.bins.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            1.0
        } else {
            max / min
        }
    }
}

/// Accumulates `|pred - gt|` of square `patch x patch` pairs into rings.
pub fn error_vs_border_distance(preds: &[BoundaryImage], gts: &[BoundaryImage], patch: usize) -> Result<ErrorProfile> {
    if preds.len() != gts.len() {
        return Err(Error::shape(
            "error_vs_border_distance",
            format!("{} predictions vs {} targets", preds.len(), gts.len()),
        ));
    }
    if patch < 2 {
        return Err(Error::shape("error_vs_border_distance", "patch must be at least 2"));
    }
    let n_bins = patch / 2;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (p, g) in preds.iter().zip(gts) {
        p.check_same_dims(g, "error_vs_border_distance")?;
        if p.dims() != (patch, patch) {
            return Err(Error::shape(
                "error_vs_border_distance",
                format!("{:?} is not {patch}x{patch}", p.dims()),
            ));
        }
        for y in 0..patch {
            for x in 0..patch {
                let d = y.min(x).min(patch - 1 - y).min(patch - 1 - x);
                sums[d] += (p.get(y, x) - g.get(y, x)).abs() as f64;
                counts[d] += 1;
            }
        }
    }
    let bins = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(ErrorProfile { bins, counts })
}
