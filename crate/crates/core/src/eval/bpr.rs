use crate::error::{Error, Result};
use crate::image::BoundaryImage;

/// Pixel counts behind precision and recall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    pub matched_pred: usize,
    pub total_pred: usize,
    pub matched_gt: usize,
    pub total_gt: usize,
}

impl MatchResult {
    pub fn precision(&self) -> f64 {
        if self.total_pred == 0 {
            1.0
        } else {
            self.matched_pred as f64 / self.total_pred as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.total_gt == 0 {
            1.0
        } else {
            self.matched_gt as f64 / self.total_gt as f64
        }
    }

    pub fn f_measure(&self) -> f64 {
        f_measure(self.precision(), self.recall())
    }

    pub fn merge(&mut self, other: &MatchResult) {
        self.matched_pred += other.matched_pred;
        self.total_pred += other.total_pred;
        self.matched_gt += other.matched_gt;
        self.total_gt += other.total_gt;
    }
}

pub(crate) fn f_measure(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bpr {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
    pub matches: MatchResult,
}

impl From<MatchResult> for Bpr {
    fn from(m: MatchResult) -> Self {
        Bpr {
            precision: m.precision(),
            recall: m.recall(),
            f: m.f_measure(),
            matches: m,
        }
    }
}

/// Maximum over the `(2 tol + 1)^2` Chebyshev neighbourhood, clipped at the
/// image edge.
pub fn max_filter(values: &[f32], height: usize, width: usize, tol: usize) -> Vec<f32> {
    let mut rows = vec![0.0f32; values.len()];
    for y in 0..height {
        let r = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(tol);
            let hi = (x + tol).min(width - 1);
            rows[y * width + x] = r[lo..=hi].iter().copied().fold(f32::NEG_INFINITY, f32::max);
        }
    }
    let mut out = vec![0.0f32; values.len()];
    for y in 0..height {
        let lo = y.saturating_sub(tol);
        let hi = (y + tol).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi)
                .map(|yy| rows[yy * width + x])
                .fold(f32::NEG_INFINITY, f32::max);
        }
    }
    out
}

pub(crate) fn check_mask(image: &BoundaryImage, mask: Option<&BoundaryImage>, op: &'static str) -> Result<()> {
    if let Some(m) = mask {
        image.check_same_dims(m, op)?;
        if !m.is_binary() {
            return Err(Error::InvalidData(format!("{op}: mask is not binary")));
        }
    }
    Ok(())
}

/// Applies the mask: pixels outside it are dropped from both sets.
pub(crate) fn masked(image: &BoundaryImage, mask: Option<&BoundaryImage>) -> Vec<f32> {
    match mask {
        None => image.data().to_vec(),
        Some(m) => image.data().iter().zip(m.data()).map(|(&v, &k)| v * k).collect(),
    }
}

/// Boundary precision/recall of binary images. A predicted pixel is
/// matched when some ground-truth pixel lies within Chebyshev distance
/// `tol`, and symmetrically for recall. With a mask, only pixels where the
/// mask is 1 take part.
pub fn bpr(pred: &BoundaryImage, gt: &BoundaryImage, tol: usize, mask: Option<&BoundaryImage>) -> Result<Bpr> {
    pred.check_same_dims(gt, "bpr")?;
    check_mask(pred, mask, "bpr")?;
    if !pred.is_binary() || !gt.is_binary() {
        return Err(Error::InvalidData("bpr: inputs must be binary".into()));
    }
    let (h, w) = pred.dims();
    let p = masked(pred, mask);
    let g = masked(gt, mask);
    let near_g = max_filter(&g, h, w, tol);
    let near_p = max_filter(&p, h, w, tol);
    let mut m = MatchResult::default();
    for i in 0..p.len() {
        if p[i] == 1.0 {
            m.total_pred += 1;
            m.matched_pred += (near_g[i] == 1.0) as usize;
        }
        if g[i] == 1.0 {
            m.total_gt += 1;
            m.matched_gt += (near_p[i] == 1.0) as usize;
        }
    }
    Ok(m.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dots(h: usize, w: usize, pts: &[(usize, usize)]) -> BoundaryImage {
        let mut img = BoundaryImage::zeros(h, w);
        for &(y, x) in pts {
            img.set(y, x, 1.0);
        }
        img
    }

    #[test]
    fn identical_is_perfect() {
        let a = dots(5, 5, &[(1, 1), (3, 4)]);
        let r = bpr(&a, &a, 1, None).unwrap();
        assert_eq!((r.precision, r.recall, r.f), (1.0, 1.0, 1.0));
    }

    #[test]
    fn tolerance_geometry() {
        let g = dots(7, 7, &[(3, 3)]);
        assert_eq!(bpr(&dots(7, 7, &[(4, 4)]), &g, 1, None).unwrap().f, 1.0);
        assert_eq!(bpr(&dots(7, 7, &[(3, 5)]), &g, 1, None).unwrap().f, 0.0);
        assert_eq!(bpr(&dots(7, 7, &[(4, 4)]), &g, 0, None).unwrap().f, 0.0);
    }

    #[test]
    fn empty_conventions() {
        let z = BoundaryImage::zeros(3, 3);
        let g = dots(3, 3, &[(1, 1)]);
        let r = bpr(&z, &g, 1, None).unwrap();
        assert_eq!((r.precision, r.recall, r.f), (1.0, 0.0, 0.0));
        let r = bpr(&g, &z, 1, None).unwrap();
        assert_eq!((r.precision, r.recall, r.f), (0.0, 1.0, 0.0));
        let r = bpr(&z, &z, 1, None).unwrap();
        assert_eq!(r.f, 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = BoundaryImage::zeros(3, 3);
        assert!(bpr(&a, &BoundaryImage::zeros(3, 4), 1, None).is_err());
        let half = BoundaryImage::from_fn(3, 3, |_, _| 0.5);
        assert!(bpr(&half, &a, 1, None).is_err());
        assert!(bpr(&a, &a, 1, Some(&half)).is_err());
    }

    #[test]
    fn mask_drops_pixels() {
        let p = dots(4, 8, &[(1, 1), (1, 6)]);
        let g = dots(4, 8, &[(1, 1)]);
        let mask = BoundaryImage::from_fn(4, 8, |_, x| (x < 4) as u8 as f32);
        assert_eq!(bpr(&p, &g, 1, None).unwrap().precision, 0.5);
        assert_eq!(bpr(&p, &g, 1, Some(&mask)).unwrap().precision, 1.0);
    }
}
