use crate::error::{Error, Result};
use crate::image::BoundaryImage;
use crate::io::{patch_index, patch_sample, PatchIndex};
use crate::model::{Cmsc, CmscConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::rng::SeededRng;
use crate::sim::strip_border;

/// Optimization settings of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: CmscConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate reached by the last step under cosine decay; equal
    /// to `learning_rate` for a constant schedule.
    pub final_learning_rate: f64,
    /// Updates over which the learning rate ramps up linearly from zero.
    pub warmup_steps: u64,
    pub seed: u64,
    /// Samples drawn per epoch; `None` uses every sample once.
    pub samples_per_epoch: Option<usize>,
    /// Share of each epoch drawn from samples whose input or target patch
    /// holds a ball boundary. `None` draws uniformly.
    pub active_fraction: Option<f64>,
    /// Strip the table border from every frame before training.
    pub blind: bool,
    /// Output confidence of a fresh model before training; `None` keeps
    /// the symmetric 0.5.
    pub output_rate: Option<f64>,
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            model: CmscConfig::desk(),
            epochs: 8,
            batch_size: 8,
            learning_rate: 1e-3,
            final_learning_rate: 1e-4,
            warmup_steps: 500,
            seed: 0,
            samples_per_epoch: Some(6_000),
            active_fraction: Some(0.75),
            blind: false,
            output_rate: Some(0.05),
        }
    }

    /// Full-scale settings: every sample each epoch, batch 32.
    pub fn full() -> Self {
        TrainConfig {
            model: CmscConfig::full(),
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            final_learning_rate: 1e-3,
            warmup_steps: 500,
            seed: 0,
            samples_per_epoch: None,
            active_fraction: None,
            blind: false,
            output_rate: Some(0.05),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if let Some(f) = self.active_fraction {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("active_fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Applies one `key=value` setting, model keys included. Returns `false`
    /// for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        let err = || Error::Config(format!("{key}: cannot parse {v:?}"));
        match key {
            "epochs" => self.epochs = v.parse().map_err(|_| err())?,
            "batch_size" => self.batch_size = v.parse().map_err(|_| err())?,
            "learning_rate" => self.learning_rate = v.parse().map_err(|_| err())?,
            "final_learning_rate" => self.final_learning_rate = v.parse().map_err(|_| err())?,
            "warmup_steps" => self.warmup_steps = v.parse().map_err(|_| err())?,
            "seed" => self.seed = v.parse().map_err(|_| err())?,
            "samples_per_epoch" => {
                self.samples_per_epoch = if v == "all" {
                    None
                } else {
                    Some(v.parse().map_err(|_| err())?)
                }
            }
            "active_fraction" => {
                self.active_fraction = if v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|_| err())?)
                }
            }
            "blind" => self.blind = v.parse().map_err(|_| err())?,
            "output_rate" => {
                self.output_rate = if v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|_| err())?)
                }
            }
            _ => return self.model.set(key, v),
        }
        Ok(true)
    }

    /// Fresh seeded model for this configuration.
    pub fn initial_model(&self) -> Result<Cmsc<f32>> {
        let mut m = Cmsc::new(self.model.clone(), &SeededRng::new(self.seed).split(u64::MAX))?;
        if let Some(r) = self.output_rate {
            m.set_output_rate(r)?;
        }
        Ok(m)
    }

    /// Learning rate for update `step` of `total`: linear warmup, then
    /// cosine decay to `final_learning_rate`.
    pub fn learning_rate_at(&self, step: u64, total: u64) -> f64 {
        if step < self.warmup_steps {
            return self.learning_rate * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps + 1);
        if span == 0 {
            return self.learning_rate;
        }
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
        self.final_learning_rate + (self.learning_rate - self.final_learning_rate) * cos
    }
}

/// Mean training loss per epoch and the number of optimizer updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SampleRef {
    sequence: usize,
    index: PatchIndex,
}

/// Training sample positions over a set of sequences, split by whether a
/// ball boundary is visible in the central patch.
struct SamplePool {
    active: Vec<SampleRef>,
    idle: Vec<SampleRef>,
}

fn has_ball(frame: &BoundaryImage, row: usize, col: usize, patch: usize) -> bool {
    let (h, w) = frame.dims();
    let y0 = (row * patch).max(1);
    let y1 = ((row + 1) * patch).min(h - 1);
    let x0 = (col * patch).max(1);
    let x1 = ((col + 1) * patch).min(w - 1);
    (y0..y1).any(|y| (x0..x1).any(|x| frame.get(y, x) > 0.0))
}

impl SamplePool {
    fn new(sequences: &[Vec<BoundaryImage>], config: &CmscConfig) -> Result<Self> {
        let mut pool = SamplePool {
            active: Vec::new(),
            idle: Vec::new(),
        };
        for (s, frames) in sequences.iter().enumerate() {
            for index in patch_index(frames, config)? {
                let r = SampleRef { sequence: s, index };
                let PatchIndex { t, row, col } = index;
                let active = [t, t + 1].iter().any(|&f| has_ball(&frames[f], row, col, config.patch));
                if active {
                    pool.active.push(r);
                } else {
                    pool.idle.push(r);
                }
            }
        }
        Ok(pool)
    }

    fn len(&self) -> usize {
        self.active.len() + self.idle.len()
    }

    fn epoch(&self, config: &TrainConfig, rng: &mut SeededRng) -> Vec<SampleRef> {
        let mut all: Vec<SampleRef> = self.active.iter().chain(&self.idle).copied().collect();
        let total = config.samples_per_epoch.unwrap_or(all.len());
        let mut order = match config.active_fraction {
            Some(f) if !self.active.is_empty() && !self.idle.is_empty() => {
                let n_active = (f * total as f64).round() as usize;
                let mut out = draw(&self.active, n_active, rng);
                out.extend(draw(&self.idle, total - n_active, rng));
                out
            }
            _ => {
                rng.shuffle(&mut all);
                all.into_iter().cycle().take(total).collect()
            }
        };
        rng.shuffle(&mut order);
        order
    }
}

/// `n` items from `items`, each full pass in a fresh random order.
fn draw(items: &[SampleRef], n: usize, rng: &mut SeededRng) -> Vec<SampleRef> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pass = items.to_vec();
        rng.shuffle(&mut pass);
        out.extend(pass.into_iter().take(n - out.len()));
    }
    out
}

/// Trains `model` on all patch samples of `sequences` with ADAM. The
/// optimizer state always starts fresh, also for warm starts. `on_epoch` is
/// called with the epoch number and its mean loss.
pub fn train(
    model: &mut Cmsc<f32>,
    sequences: &[Vec<BoundaryImage>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    config.validate()?;
    if model.config() != &config.model {
        return Err(Error::Config(
            "model architecture differs from the training config".into(),
        ));
    }
    let stripped: Vec<Vec<BoundaryImage>>;
    let sequences = if config.blind {
        stripped = sequences.iter().map(|s| s.iter().map(strip_border).collect()).collect();
        &stripped[..]
    } else {
        sequences
    };
    let pool = SamplePool::new(sequences, &config.model)?;
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok(report);
    }
    if pool.len() == 0 {
        return Err(Error::Config(
            "no training samples: sequences shorter than n + 1 frames".into(),
        ));
    }
    let per_epoch = config.samples_per_epoch.unwrap_or(pool.len());
    let total_steps = (config.epochs * per_epoch.div_ceil(config.batch_size)) as u64;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let root = SeededRng::new(config.seed);
    for epoch in 0..config.epochs {
        let mut rng = root.split(epoch as u64);
        let order = pool.epoch(config, &mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            model.params_mut().zero_grad();
            for r in batch {
                let s = patch_sample(&sequences[r.sequence], r.index, &config.model);
                let loss = model.accumulate_gradients(&s.frames, &s.target).map_err(|e| match e {
                    Error::NonFinite(m) => Error::NonFinite(format!("step {}: {m}", report.steps + 1)),
                    e => e,
                })?;
                sum += loss as f64;
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f32);
            adam.config.learning_rate = config.learning_rate_at(report.steps, total_steps);
            adam.step(model.params_mut())?;
            report.steps += 1;
        }
        let mean = sum / order.len() as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch + 1, mean);
    }
    Ok(report)
}
