//! Procedural foreground trajectories in three tiers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Bounds;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    ShortLinear,
    MediumCurved,
    LongMultisegment,
}

/// `points` holds [p0, p1] for a line, [p0, c, p1] for one quadratic Bézier,
/// and [p0, c0, p1, c1, p2, …] for a chain of quadratic Béziers that share
/// endpoints. Chain segments split the unit time interval evenly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tier: Tier,
    pub points: Vec<[f64; 2]>,
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
}

fn bezier2(p0: [f64; 2], c: [f64; 2], p1: [f64; 2], t: f64) -> [f64; 2] {
    let u = 1.0 - t;
    [
        u * u * p0[0] + 2.0 * u * t * c[0] + t * t * p1[0],
        u * u * p0[1] + 2.0 * u * t * c[1] + t * t * p1[1],
    ]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl Trajectory {
    pub fn segments(&self) -> usize {
        match self.tier {
            Tier::ShortLinear | Tier::MediumCurved => 1,
            Tier::LongMultisegment => (self.points.len() - 1) / 2,
        }
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        let t = t.clamp(0.0, 1.0);
        match self.tier {
            Tier::ShortLinear => lerp(self.points[0], self.points[1], t),
            Tier::MediumCurved => bezier2(self.points[0], self.points[1], self.points[2], t),
            Tier::LongMultisegment => {
                let k = self.segments();
                let s = (t * k as f64).min(k as f64 - 1e-12);
                let i = (s.floor() as usize).min(k - 1);
                let local = if t >= 1.0 { 1.0 } else { s - i as f64 };
                let p = &self.points[2 * i..2 * i + 3];
                bezier2(p[0], p[1], p[2], local)
            }
        }
    }

    /// Polyline length through `samples + 1` evenly spaced points.
    pub fn arc_length(&self, samples: usize) -> f64 {
        let mut prev = self.position(0.0);
        let mut total = 0.0;
        for k in 1..=samples {
            let p = self.position(k as f64 / samples as f64);
            total += dist(prev, p);
            prev = p;
        }
        total
    }

    pub fn displacement(&self, t: f64) -> [f64; 2] {
        let a = self.position(0.0);
        let b = self.position(t);
        [b[0] - a[0], b[1] - a[1]]
    }
}

/// Bounds shrunk by 10% of the extent on every side; trajectories stay inside.
pub fn inner_bounds(b: &Bounds) -> Bounds {
    let mx = 0.1 * (b.max[0] - b.min[0]);
    let my = 0.1 * (b.max[1] - b.min[1]);
    Bounds {
        min: [b.min[0] + mx, b.min[1] + my],
        max: [b.max[0] - mx, b.max[1] - my],
    }
}

fn project(p: [f64; 2], b: &Bounds) -> [f64; 2] {
    [p[0].clamp(b.min[0], b.max[0]), p[1].clamp(b.min[1], b.max[1])]
}

fn random_point<R: Rng>(rng: &mut R, b: &Bounds) -> [f64; 2] {
    [
        rng.random_range(b.min[0]..b.max[0]),
        rng.random_range(b.min[1]..b.max[1]),
    ]
}

fn random_dir<R: Rng>(rng: &mut R) -> [f64; 2] {
    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    [a.cos(), a.sin()]
}

/// Bézier control point offset perpendicular to the chord midpoint.
fn bend(p0: [f64; 2], p1: [f64; 2], amount: f64) -> [f64; 2] {
    let m = lerp(p0, p1, 0.5);
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    [m[0] - d[1] * amount, m[1] + d[0] * amount]
}

/// Deterministic per seed. Length conventions, as fractions of the bounds diagonal:
/// short_linear 0.10–0.18; medium_curved chord 0.25–0.35; long_multisegment
/// three segments with arc length 0.5–0.9 and end-to-start distance ≥ 0.3.
pub fn make_trajectory(tier: Tier, seed: u64, bounds: &Bounds) -> Result<Trajectory> {
    bounds.validate()?;
    let inner = inner_bounds(bounds);
    let diag = bounds.diagonal();
    let mut rng = rng_for(seed, "trajectory");
    match tier {
        Tier::ShortLinear => {
            for _ in 0..1000 {
                let p0 = random_point(&mut rng, &inner);
                let len = rng.random_range(0.10..0.18) * diag;
                let d = random_dir(&mut rng);
                let p1 = project([p0[0] + len * d[0], p0[1] + len * d[1]], &inner);
                if dist(p0, p1) >= 0.10 * diag {
                    return Ok(Trajectory {
                        tier,
                        points: vec![p0, p1],
                    });
                }
            }
        }
        Tier::MediumCurved => {
            for _ in 0..1000 {
                let p0 = random_point(&mut rng, &inner);
                let len = rng.random_range(0.25..0.35) * diag;
                let d = random_dir(&mut rng);
                let p2 = project([p0[0] + len * d[0], p0[1] + len * d[1]], &inner);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let c = project(bend(p0, p2, sign * rng.random_range(0.2..0.4)), &inner);
                if dist(p0, p2) >= 0.25 * diag {
                    return Ok(Trajectory {
                        tier,
                        points: vec![p0, c, p2],
                    });
                }
            }
        }
        Tier::LongMultisegment => {
            for _ in 0..10_000 {
                let mut way = vec![random_point(&mut rng, &inner)];
                for _ in 0..3 {
                    way.push(random_point(&mut rng, &inner));
                }
                let mut points = vec![way[0]];
                for w in way.windows(2) {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let c = project(bend(w[0], w[1], sign * rng.random_range(0.1..0.25)), &inner);
                    points.push(c);
                    points.push(w[1]);
                }
                let traj = Trajectory { tier, points };
                let arc = traj.arc_length(1000);
                let span = dist(way[0], way[3]);
                if (0.5 * diag..=0.9 * diag).contains(&arc) && span >= 0.3 * diag {
                    return Ok(traj);
                }
            }
        }
    }
    Err(Error::InvalidInput(format!(
        "could not place a {tier:?} trajectory inside {bounds:?}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds() -> Bounds {
        Bounds {
            min: [-1.0, -1.0],
            max: [1.0, 1.0],
        }
    }

    #[test]
    fn linear_midpoint() {
        let t = make_trajectory(Tier::ShortLinear, 3, &unit_bounds()).unwrap();
        let (p0, p1) = (t.points[0], t.points[1]);
        let m = t.position(0.5);
        assert!((m[0] - 0.5 * (p0[0] + p1[0])).abs() < 1e-15);
        assert!((m[1] - 0.5 * (p0[1] + p1[1])).abs() < 1e-15);
    }

    #[test]
    fn bezier_midpoint() {
        let t = make_trajectory(Tier::MediumCurved, 4, &unit_bounds()).unwrap();
        let p = &t.points;
        let m = t.position(0.5);
        for k in 0..2 {
            let want = 0.25 * p[0][k] + 0.5 * p[1][k] + 0.25 * p[2][k];
            assert!((m[k] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn long_paths_are_long_and_continuous() {
        let b = unit_bounds();
        for seed in 0..20 {
            let t = make_trajectory(Tier::LongMultisegment, seed, &b).unwrap();
            assert!(t.segments() >= 3);
            assert!(t.arc_length(1000) >= 0.5 * b.diagonal());
            // C⁰ at the joints.
            for j in 1..t.segments() {
                let s = j as f64 / t.segments() as f64;
                let a = t.position(s - 1e-9);
                let c = t.position(s + 1e-9);
                assert!(dist(a, c) < 1e-6);
            }
            for k in 0..=100 {
                assert!(b.contains(t.position(k as f64 / 100.0)));
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let b = unit_bounds();
        for tier in [Tier::ShortLinear, Tier::MediumCurved, Tier::LongMultisegment] {
            assert_eq!(make_trajectory(tier, 9, &b).unwrap(), make_trajectory(tier, 9, &b).unwrap());
        }
    }

    #[test]
    fn rejects_degenerate_bounds() {
        let b = Bounds {
            min: [0.0, 0.0],
            max: [0.0, 1.0],
        };
        assert!(make_trajectory(Tier::ShortLinear, 0, &b).is_err());
    }
}
