use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::align::AlignConfig;
use crate::error::{Error, Result};
use crate::field::FieldShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Timestep partition schedule with the alignment term.
    Progressive,
    /// All timesteps from the first iteration, no alignment term.
    Simultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Splats scattered uniformly over the scene bounds.
    Random,
    /// Ground-truth splats with noise added; requires `gt_scene.json`.
    GtPerturbed,
}

/// Per-attribute Adam step sizes for the static splats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatRates {
    pub center: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for SplatRates {
    fn default() -> Self {
        SplatRates {
            center: 4e-3,
            scale: 2e-3,
            rotation: 1e-2,
            opacity: 1e-2,
            color: 5e-3,
        }
    }
}

impl SplatRates {
    /// One rate per flat splat parameter, for `n` splats.
    pub fn per_param(&self, n: usize) -> Vec<f64> {
        let one = [
            self.center,
            self.center,
            self.scale,
            self.scale,
            self.rotation,
            self.opacity,
            self.color,
            self.color,
            self.color,
        ];
        one.iter().copied().cycle().take(9 * n).collect()
    }

    fn scaled(&self, k: f64) -> SplatRates {
        SplatRates {
            center: self.center * k,
            scale: self.scale * k,
            rotation: self.rotation * k,
            opacity: self.opacity * k,
            color: self.color * k,
        }
    }

    pub fn decayed(&self, final_ratio: f64, progress: f64) -> SplatRates {
        self.scaled(final_ratio.powf(progress.clamp(0.0, 1.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset directory; the command-line flag takes precedence.
    pub dataset: Option<PathBuf>,
    /// Output directory; the command-line flag takes precedence.
    pub out: Option<PathBuf>,
    pub mode: Mode,
    pub seed: u64,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub update_interval: usize,
    pub window: usize,
    /// Adam step size for the deformation field.
    pub lr: f64,
    /// Multiplier on `lr` for the feature planes.
    pub grid_lr_scale: f64,
    pub w0: f64,
    /// Motion-mask threshold; `None` means 5% of the scene diagonal.
    pub tau: Option<f64>,
    pub lambda_l1: f64,
    pub lambda_tv: f64,
    pub lambda_align: f64,
    pub field: FieldShape,
    pub init: InitMode,
    /// Splat count for random initialization; `None` uses the dataset's.
    pub model_splats: Option<usize>,
    /// Noise scale for perturbed initialization, relative to each attribute.
    pub init_noise: f64,
    pub stage1_rates: SplatRates,
    /// Ratio of final to initial stage-1 step sizes (exponential decay).
    pub stage1_final_ratio: f64,
    /// Train splats in stage 2 as well; off freezes the stage-1 scene.
    pub unfreeze_splats: bool,
    /// Iterations per loss-curve row.
    pub log_interval: usize,
    /// Probability that a progressive step draws its timestep from T₀ instead of T₁.
    pub replay: f64,
    /// Row bands used by the renderer.
    pub tiles: usize,
    /// Timestep stage 1 is fitted on and the schedule starts from.
    pub initial_timestep: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            out: None,
            mode: Mode::Progressive,
            seed: 0,
            stage1_iters: 2000,
            stage2_iters: 12000,
            update_interval: 1000,
            window: 1,
            lr: crate::grad::DEFAULT_LR,
            grid_lr_scale: 3.0,
            w0: 1.0,
            tau: None,
            lambda_l1: 1.0,
            lambda_tv: 1.0,
            lambda_align: 1.0,
            field: FieldShape::default(),
            init: InitMode::Random,
            model_splats: None,
            init_noise: 0.1,
            stage1_rates: SplatRates::default(),
            stage1_final_ratio: 0.1,
            unfreeze_splats: false,
            log_interval: 100,
            replay: 0.7,
            tiles: 8,
            initial_timestep: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::InvalidInput(format!("{key}: {why}")));
        for (key, v) in [
            ("stage1_iters", self.stage1_iters),
            ("stage2_iters", self.stage2_iters),
            ("update_interval", self.update_interval),
            ("window", self.window),
            ("log_interval", self.log_interval),
            ("tiles", self.tiles),
        ] {
            if v == 0 {
                return bad(key, "must be > 0");
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be finite and > 0");
        }
        if !(self.grid_lr_scale > 0.0 && self.grid_lr_scale.is_finite()) {
            return bad("grid_lr_scale", "must be finite and > 0");
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return bad("init_noise", "must be finite and >= 0");
        }
        if !(self.stage1_final_ratio > 0.0 && self.stage1_final_ratio <= 1.0) {
            return bad("stage1_final_ratio", "must lie in (0, 1]");
        }
        let r = self.stage1_rates;
        if ![r.center, r.scale, r.rotation, r.opacity, r.color]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite())
        {
            return bad("stage1_rates", "must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.replay) {
            return bad("replay", "must lie in [0, 1)");
        }
        if self.model_splats == Some(0) {
            return bad("model_splats", "must be positive");
        }
        if let Some(t) = self.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("tau", "must be finite and >= 0");
            }
        }
        self.field.validate()?;
        self.align(1.0).validate()
    }

    /// Alignment settings for a scene with the given bounding-box diagonal.
    pub fn align(&self, diagonal: f64) -> AlignConfig {
        AlignConfig {
            w0: self.w0,
            tau: self.tau.unwrap_or(0.05 * diagonal),
            lambda_l1: self.lambda_l1,
            lambda_tv: self.lambda_tv,
            lambda_align: self.lambda_align,
        }
    }

    /// The same run in the other mode; everything else is kept.
    pub fn with_mode(&self, mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            ..self.clone()
        }
    }
}
