use crate::error::{Error, Result};
use crate::eval::{default_thresholds, mse_metric, MetricTable, PrAccumulator};
use crate::image::BoundaryImage;
use crate::model::Cmsc;
use crate::sim::strip_border;

use super::rollout::{last_input_baseline, rollout, teacher_forced};

/// Scoring settings shared by every horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub tol: usize,
    pub mask: Option<BoundaryImage>,
    pub thresholds: Vec<f32>,
    /// Also report AUC, for confidence-valued ground truth.
    pub confidence: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tol: 1,
            mask: None,
            thresholds: default_thresholds(),
            confidence: false,
        }
    }
}

/// Ones everywhere except the outermost pixel ring.
pub fn interior_mask(height: usize, width: usize) -> BoundaryImage {
    BoundaryImage::from_fn(height, width, |y, x| {
        (y > 0 && x > 0 && y + 1 < height && x + 1 < width) as u8 as f32
    })
}

/// Precision/recall counts pooled over sequences, one curve per horizon
/// step.
#[derive(Clone, Debug)]
pub struct HorizonScores {
    options: EvalOptions,
    per_step: Vec<PrAccumulator>,
    mse: Vec<(f64, usize)>,
}

impl HorizonScores {
    pub fn new(options: EvalOptions, horizon: usize) -> Result<Self> {
        let acc = PrAccumulator::new(options.thresholds.clone(), options.tol)?;
        Ok(HorizonScores {
            per_step: vec![acc; horizon],
            mse: vec![(0.0, 0); horizon],
            options,
        })
    }

    pub fn horizon(&self) -> usize {
        self.per_step.len()
    }

    /// Scores `preds[k]` against `gts[k]` at step `k + 1`.
    pub fn add(&mut self, preds: &[BoundaryImage], gts: &[BoundaryImage]) -> Result<()> {
        if preds.len() > gts.len() || preds.len() > self.per_step.len() {
            return Err(Error::shape(
                "eval",
                format!(
                    "{} predictions for {} targets, horizon {}",
                    preds.len(),
                    gts.len(),
                    self.horizon()
                ),
            ));
        }
        for (k, (p, g)) in preds.iter().zip(gts).enumerate() {
            self.per_step[k].add(p, g, self.options.mask.as_ref())?;
            let m = &mut self.mse[k];
            m.0 += mse_metric(p, g)?;
            m.1 += 1;
        }
        Ok(())
    }

    /// `best_f` (and `auc`, `mse`) per step; steps with no data are skipped.
    pub fn table(&self) -> MetricTable {
        let mut t = MetricTable::default();
        for (k, acc) in self.per_step.iter().enumerate() {
            let (sum, n) = self.mse[k];
            if n == 0 {
                continue;
            }
            let c = acc.curve();
            t.push(k + 1, "best_f", c.best_f);
            if self.options.confidence {
                t.push(k + 1, "auc", c.auc);
            }
            t.push(k + 1, "mse", sum / n as f64);
        }
        t
    }
}

/// Which predictor fills the horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Predictor {
    Rollout,
    TeacherForced,
    LastInput,
}

/// Runs `predictor` from every start frame `t = n-1, n-1+stride, ..` with a
/// full horizon available, and scores against the ground truth. With
/// `blind`, borders are stripped from inputs and targets.
pub fn evaluate_sequences(
    model: &Cmsc<f32>,
    sequences: &[Vec<BoundaryImage>],
    predictor: Predictor,
    horizon: usize,
    stride: usize,
    blind: bool,
    options: &EvalOptions,
) -> Result<MetricTable> {
    let n = model.config().n_input_frames;
    let mut scores = HorizonScores::new(options.clone(), horizon)?;
    for seq in sequences {
        let seq: Vec<BoundaryImage> = if blind {
            seq.iter().map(strip_border).collect()
        } else {
            seq.clone()
        };
        let mut t = n - 1;
        while t + horizon < seq.len() {
            let seed = &seq[t + 1 - n..=t];
            let preds = match predictor {
                Predictor::Rollout => rollout(model, seed, horizon)?,
                Predictor::TeacherForced => teacher_forced(model, &seq, t, horizon)?,
                Predictor::LastInput => last_input_baseline(seed, horizon)?,
            };
            scores.add(&preds, &seq[t + 1..=t + horizon])?;
            t += stride.max(1);
        }
    }
    Ok(scores.table())
}
