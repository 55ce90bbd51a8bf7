use serde::{Deserialize, Serialize};

use super::trajectory::Tier;
use crate::error::{Error, Result};
use crate::field::Bounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    /// Range of per-axis scales in world units.
    pub fn scale_range(self) -> (f64, f64) {
        match self {
            SizeClass::Small => (0.04, 0.07),
            SizeClass::Medium => (0.06, 0.10),
            SizeClass::Large => (0.09, 0.14),
        }
    }
}

/// Periodic in-place motion: θ += A_rot·sin(2πft + φ), s *= 1 + A_scale·sin(2πft + φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillation {
    pub rotation_amplitude: f64,
    pub scale_amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForegroundGroup {
    pub splats: usize,
    pub color: [f64; 3],
    pub size: SizeClass,
    /// Radius of the disk the group's splats are scattered in.
    pub radius: f64,
    /// `None` keeps the group in place.
    pub trajectory: Option<Tier>,
    pub oscillation: Option<Oscillation>,
}

/// Ring of cameras around the bounds center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraLayout {
    pub count: usize,
    pub ring_radius: f64,
    pub zoom: [f64; 2],
    /// Fraction of a full turn spread over the ring's in-plane rotations.
    pub rotation_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub seed: u64,
    pub bounds: Bounds,
    pub background: [f64; 3],
    pub background_splats: usize,
    pub foreground: Vec<ForegroundGroup>,
    pub cameras: CameraLayout,
    pub timesteps: usize,
    /// (width, height) in pixels.
    pub resolution: [usize; 2],
    /// Std-dev of per-frame Gaussian pixel noise; 0 disables.
    #[serde(default)]
    pub noise_sigma: f64,
}

fn unit_color(c: &[f64; 3]) -> bool {
    c.iter().all(|v| (0.0..=1.0).contains(v))
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::InvalidInput(format!("{key}: {why}")));
        self.bounds
            .validate()
            .map_err(|e| Error::InvalidInput(format!("bounds: {e}")))?;
        if self.timesteps < 2 {
            return bad("timesteps", "must be at least 2");
        }
        if self.cameras.count < 1 {
            return bad("cameras.count", "must be at least 1");
        }
        if !(self.cameras.zoom[0] > 0.0 && self.cameras.zoom[1] >= self.cameras.zoom[0]) {
            return bad("cameras.zoom", "must satisfy 0 < min <= max");
        }
        if !(self.cameras.ring_radius.is_finite() && self.cameras.rotation_spread.is_finite()) {
            return bad("cameras", "non-finite layout");
        }
        if self.resolution[0] < 1 || self.resolution[1] < 1 {
            return bad("resolution", "must be at least 1x1");
        }
        if self.background_splats < 1 {
            return bad("background_splats", "must be positive");
        }
        if !unit_color(&self.background) {
            return bad("background", "channels must lie in [0,1]");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", "must be finite and >= 0");
        }
        for (g, group) in self.foreground.iter().enumerate() {
            let key = format!("foreground[{g}]");
            if group.splats < 1 {
                return bad(&format!("{key}.splats"), "must be positive");
            }
            if !unit_color(&group.color) {
                return bad(&format!("{key}.color"), "channels must lie in [0,1]");
            }
            if !(group.radius > 0.0 && group.radius.is_finite()) {
                return bad(&format!("{key}.radius"), "must be positive");
            }
            if let Some(o) = group.oscillation {
                if ![o.rotation_amplitude, o.scale_amplitude, o.frequency]
                    .iter()
                    .all(|v| v.is_finite())
                    || o.scale_amplitude.abs() >= 1.0
                {
                    return bad(&format!("{key}.oscillation"), "invalid amplitudes");
                }
            }
        }
        Ok(())
    }

    pub fn total_splats(&self) -> usize {
        self.background_splats + self.foreground.iter().map(|g| g.splats).sum::<usize>()
    }
}
