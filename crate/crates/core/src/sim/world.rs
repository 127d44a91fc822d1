//! Frictionless billiard dynamics.
//!
//! Integration is event driven inside every frame: the earliest wall or
//! ball-ball contact is located analytically, all balls advance to it, the
//! contact is resolved and the search repeats for the rest of the frame.
//! Walls reflect the normal velocity component; equal-mass elastic
//! contacts exchange the components along the line of centres.

/// A ball; coordinates are pixels with `x` the column and `y` the row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilliardWorld {
    pub side: usize,
    pub balls: Vec<Ball>,
}

/// Contacts resolved during one [`BilliardWorld::step`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepEvents {
    pub wall: usize,
    pub ball: usize,
}

const MAX_EVENTS_PER_FRAME: usize = 1000;

enum Event {
    Wall { ball: usize, axis: usize },
    Pair { i: usize, j: usize },
}

impl Ball {
    /// Allowed range of the centre on either axis. The one-pixel table
    /// border occupies rows/columns `0` and `side - 1`; keeping the centre
    /// in `[r + 1, side - 2 - r]` keeps the rasterized ring off it.
    pub fn center_range(&self, side: usize) -> (f64, f64) {
        ((self.radius + 1) as f64, side as f64 - 2.0 - self.radius as f64)
    }

    pub fn speed_squared(&self) -> f64 {
        self.velocity[0] * self.velocity[0] + self.velocity[1] * self.velocity[1]
    }
}

impl BilliardWorld {
    /// `sum |v|^2` (unit masses, factor 1/2 omitted).
    pub fn kinetic_energy(&self) -> f64 {
        self.balls.iter().map(Ball::speed_squared).sum()
    }

    pub fn momentum(&self) -> [f64; 2] {
        self.balls
            .iter()
            .fold([0.0, 0.0], |m, b| [m[0] + b.velocity[0], m[1] + b.velocity[1]])
    }

    /// Every centre inside its allowed range and no two balls overlapping,
    /// up to `tol` pixels.
    pub fn is_valid(&self, tol: f64) -> bool {
        for b in &self.balls {
            let (lo, hi) = b.center_range(self.side);
            if b.position.iter().any(|&p| p < lo - tol || p > hi + tol) {
                return false;
            }
        }
        self.min_pair_gap() >= -tol
    }

    /// Smallest `distance - (r_i + r_j)` over ball pairs (infinite with
    /// fewer than two balls).
    pub fn min_pair_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for i in 0..self.balls.len() {
            for j in i + 1..self.balls.len() {
                let (a, b) = (&self.balls[i], &self.balls[j]);
                let d = ((a.position[0] - b.position[0]).powi(2) + (a.position[1] - b.position[1]).powi(2)).sqrt();
                gap = gap.min(d - (a.radius + b.radius) as f64);
            }
        }
        gap
    }

    fn advance(&mut self, dt: f64) {
        let side = self.side;
        for b in &mut self.balls {
            let (lo, hi) = b.center_range(side);
            for a in 0..2 {
                b.position[a] = (b.position[a] + b.velocity[a] * dt).clamp(lo, hi);
            }
        }
    }

    fn earliest_event(&self, horizon: f64) -> Option<(f64, Event)> {
        let mut best: Option<(f64, Event)> = None;
        let mut consider = |t: f64, e: Event| {
            if t <= horizon && best.as_ref().is_none_or(|(bt, _)| t < *bt) {
                best = Some((t, e));
            }
        };
        for (i, b) in self.balls.iter().enumerate() {
            let (lo, hi) = b.center_range(self.side);
            for axis in 0..2 {
                let (p, v) = (b.position[axis], b.velocity[axis]);
                if v > 0.0 {
                    consider(((hi - p) / v).max(0.0), Event::Wall { ball: i, axis });
                } else if v < 0.0 {
                    consider(((lo - p) / v).max(0.0), Event::Wall { ball: i, axis });
                }
            }
        }
        for i in 0..self.balls.len() {
            for j in i + 1..self.balls.len() {
                if let Some(t) = self.contact_time(i, j) {
                    consider(t, Event::Pair { i, j });
                }
            }
        }
        best
    }

    /// Time until balls `i` and `j` touch while approaching each other.
    fn contact_time(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (&self.balls[i], &self.balls[j]);
        let d = [b.position[0] - a.position[0], b.position[1] - a.position[1]];
        let dv = [b.velocity[0] - a.velocity[0], b.velocity[1] - a.velocity[1]];
        let approach = d[0] * dv[0] + d[1] * dv[1];
        if approach >= 0.0 {
            return None;
        }
        let reach = (a.radius + b.radius) as f64;
        let c = d[0] * d[0] + d[1] * d[1] - reach * reach;
        if c <= 0.0 {
            return Some(0.0);
        }
        let qa = dv[0] * dv[0] + dv[1] * dv[1];
        let disc = approach * approach - qa * c;
        if disc < 0.0 {
            return None;
        }
        // smaller root of qa t^2 + 2 approach t + c = 0
        Some(((-approach - disc.sqrt()) / qa).max(0.0))
    }

    fn resolve_pair(&mut self, i: usize, j: usize) {
        let (a, b) = (self.balls[i], self.balls[j]);
        let d = [b.position[0] - a.position[0], b.position[1] - a.position[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        if len == 0.0 {
            return;
        }
        let n = [d[0] / len, d[1] / len];
        let va = a.velocity[0] * n[0] + a.velocity[1] * n[1];
        let vb = b.velocity[0] * n[0] + b.velocity[1] * n[1];
        for (k, nk) in n.into_iter().enumerate() {
            self.balls[i].velocity[k] += (vb - va) * nk;
            self.balls[j].velocity[k] += (va - vb) * nk;
        }
    }

    /// Advances one frame.
    pub fn step(&mut self) -> StepEvents {
        let mut events = StepEvents::default();
        let mut remaining = 1.0;
        for _ in 0..MAX_EVENTS_PER_FRAME {
            match self.earliest_event(remaining) {
                None => break,
                Some((t, event)) => {
                    self.advance(t);
                    remaining -= t;
                    match event {
                        Event::Wall { ball, axis } => {
                            let b = &mut self.balls[ball];
                            b.velocity[axis] = -b.velocity[axis];
                            events.wall += 1;
                        }
                        Event::Pair { i, j } => {
                            self.resolve_pair(i, j);
                            events.ball += 1;
                        }
                    }
                }
            }
        }
        self.advance(remaining);
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(x: f64, y: f64, vx: f64, vy: f64) -> Ball {
        Ball {
            position: [x, y],
            velocity: [vx, vy],
            radius: 6,
        }
    }

    #[test]
    fn wall_reflection() {
        // r = 6: left bound of the centre is 7
        let mut w = BilliardWorld {
            side: 64,
            balls: vec![ball(8.0, 30.0, -3.0, 0.0)],
        };
        let ev = w.step();
        assert_eq!(ev.wall, 1);
        assert_eq!(w.balls[0].velocity, [3.0, 0.0]);
        // travelled 1 to the wall, then 2 back
        assert!((w.balls[0].position[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn head_on_swap() {
        let mut w = BilliardWorld {
            side: 96,
            balls: vec![ball(40.0, 48.0, 2.0, 0.0), ball(53.5, 48.0, -2.0, 0.0)],
        };
        let ev = w.step();
        assert_eq!(ev.ball, 1);
        assert_eq!(w.balls[0].velocity, [-2.0, 0.0]);
        assert_eq!(w.balls[1].velocity, [2.0, 0.0]);
        assert!(w.min_pair_gap() >= -1e-9);
    }

    #[test]
    fn oblique_collision_conserves_momentum_and_energy() {
        let mut w = BilliardWorld {
            side: 96,
            balls: vec![ball(40.0, 45.0, 2.0, 1.0), ball(52.0, 50.0, -1.0, -1.0)],
        };
        let (e0, p0) = (w.kinetic_energy(), w.momentum());
        for _ in 0..5 {
            w.step();
        }
        let p1 = w.momentum();
        assert!((w.kinetic_energy() - e0).abs() < 1e-12);
        assert!((p1[0] - p0[0]).abs() < 1e-12 && (p1[1] - p0[1]).abs() < 1e-12);
        assert!(w.is_valid(1e-9));
    }

    #[test]
    fn corner_hit_counts_two_walls() {
        let mut w = BilliardWorld {
            side: 64,
            balls: vec![ball(8.0, 8.0, -2.0, -2.0)],
        };
        assert_eq!(w.step().wall, 2);
        assert_eq!(w.balls[0].velocity, [2.0, 2.0]);
    }
}
