//! Planar Gaussian splats and the scenes built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on every scale component.
pub const S_MIN: f64 = 1e-4;

/// Mahalanobis radius beyond which a splat contributes exactly zero.
pub const CUTOFF_SIGMA: f64 = 3.0;

/// Number of scalars per splat in the flat parameter layout.
pub const SPLAT_PARAMS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Splat {
    pub center: [f64; 2],
    pub scale: [f64; 2],
    pub rotation: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Splat {
    pub fn is_finite(&self) -> bool {
        self.center.iter().all(|v| v.is_finite())
            && self.scale.iter().all(|v| v.is_finite())
            && self.rotation.is_finite()
            && self.opacity.is_finite()
            && self.color.iter().all(|v| v.is_finite())
    }

    /// Checks the scale, opacity and color ranges.
    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::InvalidInput("splat has non-finite fields".into()));
        }
        if self.scale.iter().any(|&s| s < S_MIN) {
            return Err(Error::InvalidInput(format!(
                "splat scale {:?} below s_min",
                self.scale
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidInput(format!(
                "opacity {} outside [0,1]",
                self.opacity
            )));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput(format!(
                "color {:?} outside [0,1]",
                self.color
            )));
        }
        Ok(())
    }

    /// Projects the splat back onto its valid set.
    pub fn clamp_in_place(&mut self) {
        for s in &mut self.scale {
            *s = s.max(S_MIN);
        }
        self.opacity = self.opacity.clamp(0.0, 1.0);
        for c in &mut self.color {
            *c = c.clamp(0.0, 1.0);
        }
    }

    /// Flat layout: (μx, μy, sx, sy, θ, α, r, g, b).
    pub fn to_params(&self) -> [f64; SPLAT_PARAMS] {
        [
            self.center[0],
            self.center[1],
            self.scale[0],
            self.scale[1],
            self.rotation,
            self.opacity,
            self.color[0],
            self.color[1],
            self.color[2],
        ]
    }

    pub fn from_params(p: &[f64]) -> Self {
        Splat {
            center: [p[0], p[1]],
            scale: [p[2], p[3]],
            rotation: p[4],
            opacity: p[5],
            color: [p[6], p[7], p[8]],
        }
    }
}

/// Symmetric 2×2 matrix stored as its three distinct entries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Covariance2 {
    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Closed-form 2×2 inverse.
    pub fn inverse(&self) -> Covariance2 {
        let inv_det = 1.0 / self.det();
        Covariance2 {
            xx: self.yy * inv_det,
            xy: -self.xy * inv_det,
            yy: self.xx * inv_det,
        }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = (half_diff * half_diff + self.xy * self.xy).sqrt();
        [mean - r, mean + r]
    }

    /// xᵀ M x
    pub fn quad_form(&self, dx: f64, dy: f64) -> f64 {
        self.xx * dx * dx + 2.0 * self.xy * dx * dy + self.yy * dy * dy
    }

    pub fn as_matrix(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

/// Σ = R·S·Sᵀ·Rᵀ with R the counter-clockwise rotation by `rotation`.
pub fn build_covariance(scale: [f64; 2], rotation: f64) -> Result<Covariance2> {
    if !scale.iter().all(|v| v.is_finite()) || !rotation.is_finite() {
        return Err(Error::InvalidInput("non-finite covariance input".into()));
    }
    if scale.iter().any(|&s| s < S_MIN) {
        return Err(Error::InvalidInput(format!(
            "scale {scale:?} below s_min = {S_MIN}"
        )));
    }
    Ok(covariance_unchecked(scale, rotation))
}

pub(crate) fn covariance_unchecked(scale: [f64; 2], rotation: f64) -> Covariance2 {
    let (sn, cs) = rotation.sin_cos();
    let a = scale[0] * scale[0];
    let b = scale[1] * scale[1];
    Covariance2 {
        xx: cs * cs * a + sn * sn * b,
        xy: cs * sn * (a - b),
        yy: sn * sn * a + cs * cs * b,
    }
}

/// One term of the additive splat sum, α·c·exp(−½ (x−μ)ᵀ Σ⁻¹ (x−μ)), with no cutoff.
pub fn splat_contribution(splat: &Splat, x: [f64; 2]) -> Result<[f64; 3]> {
    if !splat.is_finite() || !x.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite contribution input".into()));
    }
    let inv = build_covariance(splat.scale, splat.rotation)?.inverse();
    let q = inv.quad_form(x[0] - splat.center[0], x[1] - splat.center[1]);
    let w = splat.opacity * (-0.5 * q).exp();
    Ok([w * splat.color[0], w * splat.color[1], w * splat.color[2]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub splats: Vec<Splat>,
    pub background: [f64; 3],
}

impl Scene {
    pub fn new(splats: Vec<Splat>, background: [f64; 3]) -> Self {
        Scene { splats, background }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.splats.is_empty() {
            return Err(Error::EmptyScene);
        }
        if !self.background.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite background".into()));
        }
        for (i, s) in self.splats.iter().enumerate() {
            s.validate()
                .map_err(|e| Error::InvalidInput(format!("splat {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_params(&self) -> Vec<f64> {
        self.splats.iter().flat_map(|s| s.to_params()).collect()
    }

    /// Overwrites splat attributes from a flat parameter slice.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.splats.len() * SPLAT_PARAMS);
        for (s, p) in self.splats.iter_mut().zip(params.chunks_exact(SPLAT_PARAMS)) {
            *s = Splat::from_params(p);
        }
    }
}
