//! Synthetic moving-splat benchmark scenes.

mod dataset;
mod spec;
mod trajectory;

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

pub use dataset::{frame_path, load_dataset, write_dataset, FrameSet, LoadedDataset};
pub use spec::{CameraLayout, ForegroundGroup, Oscillation, SceneSpec, SizeClass};
pub use trajectory::{inner_bounds, make_trajectory, Tier, Trajectory};

use crate::camera::Camera;
use crate::error::Result;
use crate::field::Bounds;
use crate::raster::Image;
use crate::render::{render_with, RenderOptions};
use crate::seed::{derive_indexed, rng_for, rng_indexed};
use crate::splat::{Scene, Splat};

#[derive(Debug, Clone, Copy)]
struct Motion {
    offset: [f64; 2],
    phase: f64,
}

/// A ground-truth scene whose foreground moves over time.
#[derive(Debug, Clone)]
pub struct AnimatedScene {
    /// Splat attributes before any motion is applied.
    pub base: Scene,
    pub trajectories: Vec<Option<Trajectory>>,
    group_of: Vec<Option<usize>>,
    motion: Vec<Motion>,
    oscillation: Vec<Option<Oscillation>>,
}

impl AnimatedScene {
    pub fn build(spec: &SceneSpec) -> Result<Self> {
        spec.validate()?;
        let b = spec.bounds;
        let diag = b.diagonal();
        let inner = inner_bounds(&b);
        let mut splats = Vec::with_capacity(spec.total_splats());
        let mut group_of = Vec::new();
        let mut motion = Vec::new();
        let mut trajectories = Vec::new();

        let mut anchors = Vec::new();
        for (g, group) in spec.foreground.iter().enumerate() {
            let traj = match group.trajectory {
                Some(tier) => Some(make_trajectory(tier, derive_indexed(spec.seed, "group", g as u64), &b)?),
                None => None,
            };
            let anchor = match &traj {
                Some(t) => t.position(0.0),
                None => {
                    let mut rng = rng_indexed(spec.seed, "anchor", g as u64);
                    [
                        rng.random_range(inner.min[0]..inner.max[0]),
                        rng.random_range(inner.min[1]..inner.max[1]),
                    ]
                }
            };
            anchors.push((anchor, group.radius));
            trajectories.push(traj);
        }

        let mut rng = rng_for(spec.seed, "background");
        for _ in 0..spec.background_splats {
            let mut center = [0.0; 2];
            for _ in 0..200 {
                center = [
                    rng.random_range(inner.min[0]..inner.max[0]),
                    rng.random_range(inner.min[1]..inner.max[1]),
                ];
                let clear = anchors.iter().all(|(a, r)| {
                    (center[0] - a[0]).hypot(center[1] - a[1]) > r + 0.12 * diag
                });
                if clear {
                    break;
                }
            }
            splats.push(Splat {
                center,
                scale: [rng.random_range(0.10..0.22), rng.random_range(0.10..0.22)],
                rotation: rng.random_range(-1.5..1.5),
                opacity: rng.random_range(0.3..0.7),
                color: [
                    rng.random_range(0.1..0.6),
                    rng.random_range(0.1..0.6),
                    rng.random_range(0.1..0.6),
                ],
            });
            group_of.push(None);
            motion.push(Motion {
                offset: [0.0; 2],
                phase: 0.0,
            });
        }

        for (g, group) in spec.foreground.iter().enumerate() {
            let mut rng = rng_indexed(spec.seed, "foreground", g as u64);
            let (lo, hi) = group.size.scale_range();
            let anchor = anchors[g].0;
            for _ in 0..group.splats {
                let r = group.radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(0.0..TAU);
                let offset = [r * a.cos(), r * a.sin()];
                let jitter = |rng: &mut rand_chacha::ChaCha8Rng, c: f64| {
                    (c + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0)
                };
                let color = [
                    jitter(&mut rng, group.color[0]),
                    jitter(&mut rng, group.color[1]),
                    jitter(&mut rng, group.color[2]),
                ];
                splats.push(Splat {
                    center: [anchor[0] + offset[0], anchor[1] + offset[1]],
                    scale: [rng.random_range(lo..hi), rng.random_range(lo..hi)],
                    rotation: rng.random_range(-1.5..1.5),
                    opacity: rng.random_range(0.6..0.9),
                    color,
                });
                group_of.push(Some(g));
                motion.push(Motion {
                    offset,
                    phase: rng.random_range(0.0..TAU),
                });
            }
        }
        let oscillation = spec.foreground.iter().map(|g| g.oscillation).collect();
        Ok(AnimatedScene {
            base: Scene::new(splats, spec.background),
            trajectories,
            group_of,
            motion,
            oscillation,
        })
    }

    /// Ground-truth splats at normalized time `t`.
    pub fn at(&self, t: f64) -> Scene {
        let splats = self
            .base
            .splats
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let Some(g) = self.group_of[i] else {
                    return *s;
                };
                let mut out = *s;
                if let Some(traj) = &self.trajectories[g] {
                    let d = traj.displacement(t);
                    out.center = [s.center[0] + d[0], s.center[1] + d[1]];
                }
                if let Some(o) = self.oscillation[g] {
                    let w = (TAU * o.frequency * t + self.motion[i].phase).sin();
                    out.rotation += o.rotation_amplitude * w;
                    let k = 1.0 + o.scale_amplitude * w;
                    out.scale = [s.scale[0] * k, s.scale[1] * k];
                }
                out
            })
            .collect();
        Scene::new(splats, self.base.background)
    }

    /// Indices of splats that belong to a foreground group.
    pub fn foreground_indices(&self) -> Vec<usize> {
        (0..self.group_of.len()).filter(|&i| self.group_of[i].is_some()).collect()
    }

    pub fn group_offset(&self, splat: usize) -> [f64; 2] {
        self.motion[splat].offset
    }
}

pub fn ring_cameras(layout: &CameraLayout, bounds: &Bounds, resolution: [usize; 2]) -> Vec<Camera> {
    let cx = 0.5 * (bounds.min[0] + bounds.max[0]);
    let cy = 0.5 * (bounds.min[1] + bounds.max[1]);
    let n = layout.count;
    (0..n)
        .map(|k| {
            let a = TAU * k as f64 / n as f64;
            let frac = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            Camera {
                center: [cx + layout.ring_radius * a.cos(), cy + layout.ring_radius * a.sin()],
                rotation: layout.rotation_spread * TAU * (k as f64 / n as f64 - 0.5),
                zoom: layout.zoom[0] + (layout.zoom[1] - layout.zoom[0]) * frac,
                width: resolution[0],
                height: resolution[1],
            }
        })
        .collect()
}

pub fn timestamps(count: usize) -> Vec<f64> {
    (0..count).map(|k| k as f64 / (count - 1) as f64).collect()
}

/// Renders every camera at every timestep. Returns the frames and the scene at t = 0.
pub fn synth_dataset(spec: &SceneSpec) -> Result<(FrameSet, Scene)> {
    let animated = AnimatedScene::build(spec)?;
    let cameras = ring_cameras(&spec.cameras, &spec.bounds, spec.resolution);
    let times = timestamps(spec.timesteps);
    let scenes: Vec<Scene> = times.iter().map(|&t| animated.at(t)).collect();
    let nt = times.len();
    let jobs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..nt).map(move |t| (c, t)))
        .collect();
    let rendered: Vec<Image> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let mut img = render_with(&scenes[t], &cameras[c], RenderOptions::with_tiles(1))?;
            if spec.noise_sigma > 0.0 {
                let mut rng = rng_indexed(spec.seed, "noise", (c * nt + t) as u64);
                let normal = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
                for v in img.data.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
            Ok(img.clamped())
        })
        .collect::<Result<_>>()?;
    let mut it = rendered.into_iter();
    let images = (0..cameras.len())
        .map(|_| (0..nt).map(|_| it.next().unwrap()).collect())
        .collect();
    let frames = FrameSet {
        cameras,
        times,
        images,
    };
    let gt = scenes.into_iter().next().unwrap();
    Ok((frames, gt))
}

/// Identifiers of the fixed acceptance scenes, in suite order.
pub const SUITE_NAMES: [&str; 6] = ["S1", "S2", "S3", "S4", "S5", "S6"];

/// The fixed six-scene suite: static, oscillating, short, medium, long, long with oscillation.
pub fn standard_suite() -> Vec<SceneSpec> {
    let bounds = Bounds {
        min: [-1.0, -1.0],
        max: [1.0, 1.0],
    };
    let wobble = Oscillation {
        rotation_amplitude: 0.6,
        scale_amplitude: 0.25,
        frequency: 1.5,
    };
    let variants: [(Option<Tier>, Option<Oscillation>); 6] = [
        (None, None),
        (None, Some(wobble)),
        (Some(Tier::ShortLinear), None),
        (Some(Tier::MediumCurved), None),
        (Some(Tier::LongMultisegment), None),
        (Some(Tier::LongMultisegment), Some(wobble)),
    ];
    variants
        .iter()
        .zip(SUITE_NAMES)
        .map(|(&(trajectory, oscillation), name)| SceneSpec {
            name: name.to_string(),
            seed: 20_240_611,
            bounds,
            background: [0.05, 0.05, 0.08],
            background_splats: 20,
            foreground: vec![ForegroundGroup {
                splats: 12,
                color: [0.9, 0.45, 0.15],
                size: SizeClass::Medium,
                radius: 0.18,
                trajectory,
                oscillation,
            }],
            cameras: CameraLayout {
                count: 8,
                ring_radius: 0.15,
                zoom: [22.0, 26.0],
                rotation_spread: 0.25,
            },
            timesteps: 30,
            resolution: [64, 64],
            noise_sigma: 0.0,
        })
        .collect()
}
