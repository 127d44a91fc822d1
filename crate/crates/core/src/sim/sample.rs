use crate::error::{Error, Result};
use crate::image::BoundaryImage;
use crate::rng::SeededRng;

use super::raster::rasterize;
use super::world::{Ball, BilliardWorld};

/// Parameters of the synthetic world generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub side_choices: Vec<usize>,
    /// Inclusive range of each integer velocity component.
    pub velocity_range: (i64, i64),
    /// Allow the `(0, 0)` velocity.
    pub allow_zero_velocity: bool,
    pub radius: usize,
    pub n_balls: usize,
    /// Probability that a ball's start is drawn from the band next to the
    /// walls instead of the whole table.
    pub wall_band_bias: f64,
    /// Width of that band in pixels.
    pub wall_band: f64,
    /// Stop before the frame that would exceed this many wall contacts.
    pub max_wall_collisions: Option<usize>,
    pub max_frames: usize,
}

/// Placement attempts allowed per world.
pub const PLACEMENT_BUDGET: usize = 10_000;

impl SimConfig {
    /// Single-ball training worlds: sides 96..256, velocities in
    /// `[-3, 3]^2`, radius 13, half of the starts near a wall, at most two
    /// wall contacts.
    pub fn full_single_ball() -> Self {
        SimConfig {
            side_choices: vec![96, 128, 160, 192, 256],
            velocity_range: (-3, 3),
            allow_zero_velocity: false,
            radius: 13,
            n_balls: 1,
            wall_band_bias: 0.5,
            wall_band: 40.0,
            max_wall_collisions: Some(2),
            max_frames: 64,
        }
    }

    /// Multi-ball worlds, sequences of up to 200 frames.
    pub fn full_multi_ball(n_balls: usize) -> Self {
        SimConfig {
            n_balls,
            wall_band_bias: 0.0,
            max_wall_collisions: None,
            max_frames: 200,
            ..Self::full_single_ball()
        }
    }

    /// Scaled single-ball worlds for one-core runs: side 64, radius 6,
    /// velocities in `[-2, 2]^2`.
    pub fn desk_single_ball() -> Self {
        SimConfig {
            side_choices: vec![64],
            velocity_range: (-2, 2),
            radius: 6,
            wall_band: 20.0,
            ..Self::full_single_ball()
        }
    }

    pub fn desk_multi_ball(n_balls: usize) -> Self {
        SimConfig {
            n_balls,
            wall_band_bias: 0.0,
            max_wall_collisions: None,
            max_frames: 200,
            ..Self::desk_single_ball()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.side_choices.is_empty() {
            return bad("side_choices is empty".into());
        }
        let (lo, hi) = self.velocity_range;
        if lo > hi || (!self.allow_zero_velocity && lo == 0 && hi == 0) {
            return bad(format!("velocity range {lo}..={hi} has no admissible value"));
        }
        for &s in &self.side_choices {
            if s < 2 * self.radius + 4 {
                return bad(format!("side {s} too small for radius {}", self.radius));
            }
        }
        if !(0.0..=1.0).contains(&self.wall_band_bias) {
            return bad(format!("wall_band_bias {} outside [0, 1]", self.wall_band_bias));
        }
        if self.max_frames == 0 {
            return bad("max_frames must be positive".into());
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        let err = || Error::Config(format!("{key}: cannot parse {v:?}"));
        match key {
            "sides" => {
                self.side_choices = v
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| err()))
                    .collect::<Result<_>>()?
            }
            "velocity_min" => self.velocity_range.0 = v.parse().map_err(|_| err())?,
            "velocity_max" => self.velocity_range.1 = v.parse().map_err(|_| err())?,
            "allow_zero_velocity" => self.allow_zero_velocity = v.parse().map_err(|_| err())?,
            "radius" => self.radius = v.parse().map_err(|_| err())?,
            "balls" => self.n_balls = v.parse().map_err(|_| err())?,
            "wall_band_bias" => self.wall_band_bias = v.parse().map_err(|_| err())?,
            "wall_band" => self.wall_band = v.parse().map_err(|_| err())?,
            "max_wall_collisions" => {
                self.max_wall_collisions = if v == "none" {
                    None
                } else {
                    Some(v.parse().map_err(|_| err())?)
                }
            }
            "max_frames" => self.max_frames = v.parse().map_err(|_| err())?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

fn sample_velocity(config: &SimConfig, rng: &mut SeededRng) -> [f64; 2] {
    let (lo, hi) = config.velocity_range;
    loop {
        let v = [rng.int_inclusive(lo, hi), rng.int_inclusive(lo, hi)];
        if config.allow_zero_velocity || v != [0, 0] {
            return [v[0] as f64, v[1] as f64];
        }
    }
}

fn sample_position(config: &SimConfig, lo: f64, hi: f64, rng: &mut SeededRng) -> [f64; 2] {
    let near_wall = rng.bernoulli(config.wall_band_bias);
    loop {
        let p = [rng.uniform_range(lo, hi), rng.uniform_range(lo, hi)];
        if !near_wall {
            return p;
        }
        let dist = p.iter().map(|&c| (c - lo).min(hi - c)).fold(f64::INFINITY, f64::min);
        if dist <= config.wall_band {
            return p;
        }
    }
}

/// Draws a table side, then places balls one by one, redrawing any ball
/// that overlaps an earlier one. Fails once [`PLACEMENT_BUDGET`] draws are
/// used up.
pub fn sample_world(config: &SimConfig, rng: &mut SeededRng) -> Result<BilliardWorld> {
    config.validate()?;
    let side = config.side_choices[rng.index(config.side_choices.len())];
    let mut world = BilliardWorld {
        side,
        balls: Vec::with_capacity(config.n_balls),
    };
    let probe = Ball {
        position: [0.0, 0.0],
        velocity: [0.0, 0.0],
        radius: config.radius,
    };
    let (lo, hi) = probe.center_range(side);
    let reach = 2.0 * config.radius as f64;
    let mut attempts = 0;
    while world.balls.len() < config.n_balls {
        if attempts == PLACEMENT_BUDGET {
            return Err(Error::Sim(format!(
                "could not place {} balls of radius {} on a {side}-pixel table in {PLACEMENT_BUDGET} attempts",
                config.n_balls, config.radius
            )));
        }
        attempts += 1;
        let position = sample_position(config, lo, hi, rng);
        let clear = world.balls.iter().all(|b| {
            let d = ((b.position[0] - position[0]).powi(2) + (b.position[1] - position[1]).powi(2)).sqrt();
            d >= reach
        });
        if clear {
            world.balls.push(Ball {
                position,
                velocity: sample_velocity(config, rng),
                radius: config.radius,
            });
        }
    }
    Ok(world)
}

/// A rendered sequence with its ground-truth states.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub frames: Vec<BoundaryImage>,
    pub worlds: Vec<BilliardWorld>,
    pub wall_collisions: usize,
}

/// Simulates and rasterizes from a sampled start until the wall-contact
/// limit or the frame cap is reached.
pub fn sample_sequence(config: &SimConfig, rng: &mut SeededRng) -> Result<Sequence> {
    let world = sample_world(config, rng)?;
    Ok(simulate(config, world))
}

/// Runs `world` forward under the stopping rules of `config`.
pub fn simulate(config: &SimConfig, mut world: BilliardWorld) -> Sequence {
    let mut frames = vec![rasterize(&world)];
    let mut worlds = vec![world.clone()];
    let mut walls = 0;
    while frames.len() < config.max_frames {
        let mut next = world.clone();
        let ev = next.step();
        if config.max_wall_collisions.is_some_and(|m| walls + ev.wall > m) {
            break;
        }
        walls += ev.wall;
        world = next;
        frames.push(rasterize(&world));
        worlds.push(world.clone());
    }
    Sequence {
        frames,
        worlds,
        wall_collisions: walls,
    }
}
