//! Small randomized scenes and cameras shared by tests and the gradient-check suite.

use rand::Rng;

use crate::camera::Camera;
use crate::seed::rng_for;
use crate::splat::{Scene, Splat};

/// `n` random splats scattered over [-1, 1]², away from the clamp boundaries.
pub fn random_scene(seed: u64, n: usize) -> Scene {
    let mut rng = rng_for(seed, "fixture-scene");
    let splats = (0..n)
        .map(|_| Splat {
            center: [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)],
            scale: [rng.random_range(0.15..0.5), rng.random_range(0.15..0.5)],
            rotation: rng.random_range(-3.0..3.0),
            opacity: rng.random_range(0.2..0.9),
            color: [
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ],
        })
        .collect();
    Scene::new(
        splats,
        [
            rng.random_range(0.0..0.3),
            rng.random_range(0.0..0.3),
            rng.random_range(0.0..0.3),
        ],
    )
}

/// A slightly rotated, off-center camera framing [-1.25, 1.25]².
pub fn test_camera(width: usize, height: usize) -> Camera {
    Camera {
        center: [0.05, -0.03],
        rotation: 0.2,
        zoom: width.max(height) as f64 / 2.5,
        width,
        height,
    }
}
