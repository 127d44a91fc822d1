use crate::image::BoundaryImage;

use super::world::BilliardWorld;

/// Pixel offsets of the midpoint circle of radius `r` around the origin,
/// as `(dx, dy)` pairs; each appears once.
pub fn midpoint_circle(r: usize) -> Vec<(i64, i64)> {
    let mut pts = Vec::new();
    let r = r as i64;
    if r == 0 {
        return vec![(0, 0)];
    }
    let (mut x, mut y, mut err) = (r, 0i64, 1 - r);
    while x >= y {
        for (a, b) in [(x, y), (y, x), (-x, y), (-y, x), (x, -y), (y, -x), (-x, -y), (-y, -x)] {
            pts.push((a, b));
        }
        y += 1;
        if err < 0 {
            err += 2 * y + 1;
        } else {
            x -= 1;
            err += 2 * (y - x) + 1;
        }
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Table border (outermost pixel ring) plus one midpoint circle per ball at
/// its rounded centre.
pub fn rasterize(world: &BilliardWorld) -> BoundaryImage {
    let s = world.side;
    let mut img = BoundaryImage::zeros(s, s);
    for i in 0..s {
        img.set(0, i, 1.0);
        img.set(s - 1, i, 1.0);
        img.set(i, 0, 1.0);
        img.set(i, s - 1, 1.0);
    }
    for b in &world.balls {
        let cx = b.position[0].round() as i64;
        let cy = b.position[1].round() as i64;
        for (dx, dy) in midpoint_circle(b.radius) {
            let (x, y) = (cx + dx, cy + dy);
            if (0..s as i64).contains(&x) && (0..s as i64).contains(&y) {
                img.set(y as usize, x as usize, 1.0);
            }
        }
    }
    img
}

/// Zeroes the outermost pixel ring.
pub fn strip_border(image: &BoundaryImage) -> BoundaryImage {
    let (h, w) = image.dims();
    let mut out = image.clone();
    for x in 0..w {
        out.set(0, x, 0.0);
        out.set(h - 1, x, 0.0);
    }
    for y in 0..h {
        out.set(y, 0, 0.0);
        out.set(y, w - 1, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::sim::Ball;
    use std::collections::BTreeSet;

    // Independent characterisation: in the octant |dy| <= |dx| the circle
    // holds, for each |dy|, the single |dx| nearest to sqrt(r^2 - dy^2).
    fn octant_oracle(r: usize) -> BTreeSet<(i64, i64)> {
        let mut s = BTreeSet::new();
        let r = r as i64;
        for y in 0..=r {
            let x = (((r * r - y * y) as f64).sqrt() + 0.5).floor() as i64;
            if x >= y {
                for (a, b) in [(x, y), (y, x)] {
                    for sa in [1, -1] {
                        for sb in [1, -1] {
                            s.insert((sa * a, sb * b));
                        }
                    }
                }
            }
        }
        s
    }

    fn band(r: usize) -> BTreeSet<(i64, i64)> {
        let ri = r as i64;
        let mut s = BTreeSet::new();
        for dy in -ri - 1..=ri + 1 {
            for dx in -ri - 1..=ri + 1 {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                if d >= r as f64 - 0.5 && d < r as f64 + 0.5 {
                    s.insert((dx, dy));
                }
            }
        }
        s
    }

    #[test]
    fn midpoint_matches_octant_oracle_and_lies_in_band() {
        for r in 1..40 {
            let m: BTreeSet<_> = midpoint_circle(r).into_iter().collect();
            assert_eq!(m, octant_oracle(r), "radius {r}");
            assert!(m.is_subset(&band(r)), "radius {r}");
        }
    }

    #[test]
    fn empty_table_is_border_ring() {
        let img = rasterize(&BilliardWorld { side: 8, balls: vec![] });
        assert_eq!(img.count_nonzero(), 28);
        assert_eq!(img.get(0, 3), 1.0);
        assert_eq!(img.get(3, 3), 0.0);
        assert!(strip_border(&img).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_worlds_match_oracle_pixels() {
        let mut rng = SeededRng::new(17);
        for _ in 0..20 {
            let r = 13;
            let side = 96;
            let (cx, cy) = (rng.uniform_range(14.0, 81.0), rng.uniform_range(14.0, 81.0));
            let w = BilliardWorld {
                side,
                balls: vec![Ball {
                    position: [cx, cy],
                    velocity: [0.0, 0.0],
                    radius: r,
                }],
            };
            let img = strip_border(&rasterize(&w));
            let expected: BTreeSet<(usize, usize)> = octant_oracle(r)
                .into_iter()
                .map(|(dx, dy)| ((cy.round() as i64 + dy) as usize, (cx.round() as i64 + dx) as usize))
                .collect();
            let got: BTreeSet<(usize, usize)> = (0..side)
                .flat_map(|y| (0..side).map(move |x| (y, x)))
                .filter(|&(y, x)| img.get(y, x) == 1.0)
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn separated_balls_have_disjoint_rings() {
        let mk = |x: f64| Ball {
            position: [x, 30.0],
            velocity: [0.0, 0.0],
            radius: 6,
        };
        let a = rasterize(&BilliardWorld {
            side: 64,
            balls: vec![mk(15.0)],
        });
        let b = rasterize(&BilliardWorld {
            side: 64,
            balls: vec![mk(30.0)],
        });
        let both = rasterize(&BilliardWorld {
            side: 64,
            balls: vec![mk(15.0), mk(30.0)],
        });
        let border = 4 * 64 - 4;
        assert_eq!(
            both.count_nonzero() - border,
            (a.count_nonzero() - border) + (b.count_nonzero() - border)
        );
    }

    #[test]
    fn strip_keeps_interior_and_is_idempotent() {
        let w = BilliardWorld {
            side: 64,
            balls: vec![Ball {
                position: [30.0, 30.0],
                velocity: [0.0, 0.0],
                radius: 6,
            }],
        };
        let img = rasterize(&w);
        let once = strip_border(&img);
        assert_eq!(once.count_nonzero(), midpoint_circle(6).len());
        assert_eq!(strip_border(&once), once);
    }
}
