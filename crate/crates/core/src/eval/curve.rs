use crate::error::{Error, Result};
use crate::image::BoundaryImage;

use super::bpr::{check_mask, f_measure, masked, max_filter, MatchResult};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f32,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub auc: f64,
    pub best_f: f64,
}

impl PrCurve {
    /// Threshold of the point with the highest F; the lowest one on ties.
    pub fn best_threshold(&self) -> f32 {
        self.points
            .iter()
            .find(|p| p.f_measure == self.best_f)
            .map_or(0.5, |p| p.threshold)
    }
}

/// `k / 256` for `k = 1..=255`.
pub fn default_thresholds() -> Vec<f32> {
    (1..=255).map(|k| k as f32 / 256.0).collect()
}

/// Match counts for every threshold, summed over any number of frames.
///
/// A predicted pixel's matched status does not depend on the threshold, and
/// a ground-truth pixel is matched at threshold `th` exactly when the
/// largest confidence in its neighbourhood is at least `th`. One pass per
/// frame therefore fills all thresholds.
#[derive(Clone, Debug)]
pub struct PrAccumulator {
    thresholds: Vec<f32>,
    tol: usize,
    counts: Vec<MatchResult>,
}

impl PrAccumulator {
    pub fn new(thresholds: Vec<f32>, tol: usize) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Config("no thresholds".into()));
        }
        if thresholds
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::Config("thresholds must be strictly increasing".into()));
        }
        let n = thresholds.len();
        Ok(PrAccumulator {
            thresholds,
            tol,
            counts: vec![MatchResult::default(); n],
        })
    }

    pub fn thresholds(&self) -> &[f32] {
        &self.thresholds
    }

    /// Number of thresholds not above `v`.
    fn level(&self, v: f32) -> usize {
        self.thresholds.partition_point(|&t| t <= v)
    }

    pub fn add(&mut self, pred: &BoundaryImage, gt: &BoundaryImage, mask: Option<&BoundaryImage>) -> Result<()> {
        pred.check_same_dims(gt, "pr_curve")?;
        check_mask(pred, mask, "pr_curve")?;
        if !gt.is_binary() {
            return Err(Error::InvalidData("pr_curve: ground truth must be binary".into()));
        }
        if !pred.in_unit_range() {
            return Err(Error::InvalidData("pr_curve: confidences outside [0, 1]".into()));
        }
        let (h, w) = pred.dims();
        let p = masked(pred, mask);
        let g = masked(gt, mask);
        let near_g = max_filter(&g, h, w, self.tol);
        let near_p = max_filter(&p, h, w, self.tol);
        let n = self.thresholds.len();
        // hist[k]: pixels passing exactly the first k thresholds
        let mut pred_all = vec![0usize; n + 1];
        let mut pred_hit = vec![0usize; n + 1];
        let mut gt_hit = vec![0usize; n + 1];
        let mut total_gt = 0;
        for i in 0..p.len() {
            let k = self.level(p[i]);
            pred_all[k] += 1;
            if near_g[i] == 1.0 {
                pred_hit[k] += 1;
            }
            if g[i] == 1.0 {
                total_gt += 1;
                gt_hit[self.level(near_p[i])] += 1;
            }
        }
        let (mut a, mut b, mut c) = (0, 0, 0);
        for k in (0..n).rev() {
            a += pred_all[k + 1];
            b += pred_hit[k + 1];
            c += gt_hit[k + 1];
            self.counts[k].merge(&MatchResult {
                matched_pred: b,
                total_pred: a,
                matched_gt: c,
                total_gt,
            });
        }
        Ok(())
    }

    pub fn counts(&self) -> &[MatchResult] {
        &self.counts
    }

    pub fn curve(&self) -> PrCurve {
        let points: Vec<PrPoint> = self
            .thresholds
            .iter()
            .zip(&self.counts)
            .map(|(&threshold, m)| PrPoint {
                threshold,
                precision: m.precision(),
                recall: m.recall(),
                f_measure: f_measure(m.precision(), m.recall()),
            })
            .collect();
        let best_f = points.iter().map(|p| p.f_measure).fold(0.0, f64::max);
        PrCurve {
            auc: area(&points),
            points,
            best_f,
        }
    }
}

/// Trapezoid area under precision as a function of recall, with the
/// lowest-recall precision held constant down to recall 0.
fn area(points: &[PrPoint]) -> f64 {
    let mut pr: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut prev = (0.0, pr[0].1);
    let mut sum = 0.0;
    for &(r, p) in &pr {
        sum += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    sum
}

/// Precision/recall at every threshold for a single image pair.
pub fn pr_curve(pred: &BoundaryImage, gt: &BoundaryImage, thresholds: &[f32], tol: usize) -> Result<PrCurve> {
    let mut acc = PrAccumulator::new(thresholds.to_vec(), tol)?;
    acc.add(pred, gt, None)?;
    Ok(acc.curve())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bpr;

    #[test]
    fn three_pixel_toy() {
        let pred = BoundaryImage::from_vec(1, 7, vec![0.2, 0., 0., 0.6, 0., 0., 0.9]).unwrap();
        let gt = BoundaryImage::from_vec(1, 7, vec![0., 0., 0., 1., 0., 0., 1.]).unwrap();
        let c = pr_curve(&pred, &gt, &[0.1, 0.5, 0.8, 0.95], 1).unwrap();
        let pts: Vec<(f64, f64)> = c.points.iter().map(|p| (p.precision, p.recall)).collect();
        assert_eq!(pts, vec![(2.0 / 3.0, 1.0), (1.0, 1.0), (1.0, 0.5), (1.0, 0.0)]);
        assert!((c.points[0].f_measure - 0.8).abs() < 1e-12);
        assert!((c.points[2].f_measure - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.best_f, 1.0);
        assert_eq!(c.best_threshold(), 0.5);
        assert!((c.auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let gt = BoundaryImage::from_fn(6, 6, |y, x| ((y + x) % 4 == 0) as u8 as f32);
        let th = default_thresholds();
        let c = pr_curve(&gt, &gt, &th, 1).unwrap();
        assert!(c.points.iter().all(|p| p.f_measure == 1.0));
        assert_eq!(c.auc, 1.0);
        let c = pr_curve(&BoundaryImage::zeros(6, 6), &gt, &th, 1).unwrap();
        assert!(c.points.iter().all(|p| p.recall == 0.0));
        assert_eq!(c.auc, 0.0);
    }

    #[test]
    fn matches_per_threshold_bpr() {
        let mut rng = crate::SeededRng::new(8);
        for _ in 0..20 {
            let pred = BoundaryImage::from_fn(10, 10, |_, _| rng.uniform() as f32);
            let gt = BoundaryImage::from_fn(10, 10, |_, _| rng.bernoulli(0.2) as u8 as f32);
            let th = [0.1f32, 0.3, 0.5, 0.7, 0.9];
            let c = pr_curve(&pred, &gt, &th, 1).unwrap();
            for (p, &t) in c.points.iter().zip(&th) {
                let b = bpr(&pred.binarize(t), &gt, 1, None).unwrap();
                assert_eq!((p.precision, p.recall), (b.precision, b.recall));
            }
        }
    }

    #[test]
    fn rejects_unsorted_or_empty_thresholds() {
        assert!(PrAccumulator::new(vec![], 1).is_err());
        assert!(PrAccumulator::new(vec![0.5, 0.5], 1).is_err());
    }
}
