use crate::error::{Error, Result};
use crate::image::BoundaryImage;
use crate::io::{context_window, grid_dims};
use crate::model::Cmsc;

/// Predicts the frame after the last of `frames`: every grid cell reads the
/// `n` most recent frames and writes its clamped central patch.
pub fn predict_next(model: &Cmsc<f32>, frames: &[BoundaryImage]) -> Result<BoundaryImage> {
    let c = model.config();
    let n = c.n_input_frames;
    if frames.len() < n {
        return Err(Error::Config(format!("need {n} input frames, got {}", frames.len())));
    }
    let (h, w) = frames[0].dims();
    for f in frames {
        frames[0].check_same_dims(f, "rollout")?;
    }
    let (rows, cols) = grid_dims(h, w, c.patch)?;
    let t = frames.len() - 1;
    let mut next = BoundaryImage::zeros(h, w);
    for row in 0..rows {
        for col in 0..cols {
            let window = context_window(frames, t, row, col, c);
            let mut out = BoundaryImage::from_tensor(&model.forward(&window)?.prediction)?;
            out.clamp_unit();
            next.paste(&out, row * c.patch, col * c.patch)?;
        }
    }
    if !next.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("prediction contains NaN".into()));
    }
    Ok(next)
}

/// Recursive prediction of `steps` frames after `seed`. Step `k` reads
/// only the seed and the outputs of steps before `k`.
pub fn rollout(model: &Cmsc<f32>, seed: &[BoundaryImage], steps: usize) -> Result<Vec<BoundaryImage>> {
    let n = model.config().n_input_frames;
    if seed.len() < n {
        return Err(Error::Config(format!("need {n} seed frames, got {}", seed.len())));
    }
    let mut window: Vec<BoundaryImage> = seed[seed.len() - n..].to_vec();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = predict_next(model, &window)?;
        window.remove(0);
        window.push(next.clone());
        out.push(next);
    }
    Ok(out)
}

/// One-step predictions from ground truth: output `k` predicts
/// `frames[start + k + 1]` from the `n` frames ending at `start + k`.
pub fn teacher_forced(
    model: &Cmsc<f32>,
    frames: &[BoundaryImage],
    start: usize,
    steps: usize,
) -> Result<Vec<BoundaryImage>> {
    let n = model.config().n_input_frames;
    if start + 1 < n || start + steps >= frames.len() {
        return Err(Error::Config(format!(
            "teacher forcing from frame {start} for {steps} steps needs frames {}..={}, have {}",
            (start + 1).saturating_sub(n),
            start + steps,
            frames.len()
        )));
    }
    (0..steps)
        .map(|k| predict_next(model, &frames[start + k + 1 - n..=start + k]))
        .collect()
}

/// `steps` copies of the last seed frame.
pub fn last_input_baseline(seed: &[BoundaryImage], steps: usize) -> Result<Vec<BoundaryImage>> {
    let last = seed
        .last()
        .ok_or_else(|| Error::Config("baseline needs at least one frame".into()))?;
    Ok(vec![last.clone(); steps])
}
