//! Additive splat rasterizer.
//!
//! Every pixel is `background + Σᵢ αᵢ cᵢ exp(−½ qᵢ)` where `qᵢ` is the squared
//! Mahalanobis distance of the pixel center to splat `i`. Terms with
//! `qᵢ > CUTOFF_SIGMA²` are exactly zero. There is no transmittance: the sum is
//! order-independent and unbounded.
//!
//! The image is split into horizontal bands ("tiles") that render
//! independently. Within a pixel, splats are always summed in scene order, so
//! the output does not depend on the band count.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::splat::{covariance_unchecked, Covariance2, Scene, Splat, CUTOFF_SIGMA, S_MIN};

pub(crate) const CUTOFF_Q: f64 = CUTOFF_SIGMA * CUTOFF_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Number of horizontal pixel bands processed independently.
    pub tiles: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { tiles: 8 }
    }
}

impl RenderOptions {
    pub fn with_tiles(tiles: usize) -> Self {
        RenderOptions { tiles: tiles.max(1) }
    }

    /// Rows per band for an image of the given height.
    pub(crate) fn band_rows(&self, height: usize) -> usize {
        height.div_ceil(self.tiles.max(1)).max(1)
    }
}

/// Per-splat quantities shared by the forward and backward passes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub center: [f64; 2],
    pub inv: Covariance2,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Pixel bounds [col0, col1) × [row0, row1) containing every pixel with q ≤ cutoff.
    pub cols: (usize, usize),
    pub rows: (usize, usize),
}

impl Prepared {
    pub fn new(splat: &Splat, cam: &Camera) -> Self {
        let inv = covariance_unchecked(splat.scale, splat.rotation).inverse();
        let p = cam.world_to_image(splat.center);
        let r = CUTOFF_SIGMA * splat.scale[0].max(splat.scale[1]) * cam.zoom + 1.0;
        let span = |c: f64, n: usize| -> (usize, usize) {
            let lo = (c - r - 0.5).ceil();
            let hi = (c + r - 0.5).floor();
            if hi < 0.0 || lo > (n as f64 - 1.0) || lo.is_nan() || hi.is_nan() {
                return (0, 0);
            }
            let lo = lo.max(0.0) as usize;
            let hi = (hi.min(n as f64 - 1.0) as usize) + 1;
            (lo, hi)
        };
        Prepared {
            center: splat.center,
            inv,
            opacity: splat.opacity,
            color: splat.color,
            cols: span(p[0], cam.width),
            rows: span(p[1], cam.height),
        }
    }

    #[inline]
    pub fn covers(&self, col: usize, row: usize) -> bool {
        col >= self.cols.0 && col < self.cols.1 && row >= self.rows.0 && row < self.rows.1
    }

    /// Squared Mahalanobis distance of `x`; returns (q, dx, dy).
    #[inline]
    pub fn mahalanobis(&self, x: [f64; 2]) -> (f64, f64, f64) {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        (self.inv.quad_form(dx, dy), dx, dy)
    }
}

pub(crate) fn check_renderable(scene: &Scene, cam: &Camera) -> Result<()> {
    cam.validate()?;
    if scene.splats.is_empty() {
        return Err(Error::EmptyScene);
    }
    for (i, s) in scene.splats.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                index: i,
                context: "splat attributes".into(),
            });
        }
        if s.scale.iter().any(|&v| v < S_MIN) {
            return Err(Error::InvalidInput(format!("splat {i} scale below s_min")));
        }
    }
    if !scene.background.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite background".into()));
    }
    Ok(())
}

pub(crate) fn prepare_all(scene: &Scene, cam: &Camera) -> Vec<Prepared> {
    scene.splats.iter().map(|s| Prepared::new(s, cam)).collect()
}

/// Splats (in scene order) whose bounds overlap rows [r0, r1).
pub(crate) fn band_list(prepared: &[Prepared], r0: usize, r1: usize) -> Vec<usize> {
    prepared
        .iter()
        .enumerate()
        .filter(|(_, p)| p.rows.0 < r1 && p.rows.1 > r0 && p.cols.0 < p.cols.1)
        .map(|(i, _)| i)
        .collect()
}

pub fn render(scene: &Scene, cam: &Camera) -> Result<Image> {
    render_with(scene, cam, RenderOptions::default())
}

pub fn render_with(scene: &Scene, cam: &Camera, opts: RenderOptions) -> Result<Image> {
    check_renderable(scene, cam)?;
    let prepared = prepare_all(scene, cam);
    let (w, h) = (cam.width, cam.height);
    let band_rows = opts.band_rows(h);
    let mut img = Image::new(w, h);
    let bg = scene.background;

    img.data
        .par_chunks_mut(band_rows * w * 3)
        .enumerate()
        .for_each(|(band, chunk)| {
            let r0 = band * band_rows;
            let r1 = (r0 + band_rows).min(h);
            let list = band_list(&prepared, r0, r1);
            for row in r0..r1 {
                for col in 0..w {
                    let x = cam.pixel_to_world(col, row);
                    let mut acc = bg;
                    for &i in &list {
                        let p = &prepared[i];
                        if !p.covers(col, row) {
                            continue;
                        }
                        let (q, _, _) = p.mahalanobis(x);
                        if q <= CUTOFF_Q {
                            let w = p.opacity * (-0.5 * q).exp();
                            acc[0] += w * p.color[0];
                            acc[1] += w * p.color[1];
                            acc[2] += w * p.color[2];
                        }
                    }
                    let o = ((row - r0) * w + col) * 3;
                    chunk[o..o + 3].copy_from_slice(&acc);
                }
            }
        });
    Ok(img)
}

/// Single-threaded per-pixel, per-splat loop with no spatial culling.
pub fn render_naive_reference(scene: &Scene, cam: &Camera) -> Result<Image> {
    check_renderable(scene, cam)?;
    let prepared = prepare_all(scene, cam);
    let mut img = Image::new(cam.width, cam.height);
    for row in 0..cam.height {
        for col in 0..cam.width {
            let x = cam.pixel_to_world(col, row);
            let mut acc = scene.background;
            for p in &prepared {
                let (q, _, _) = p.mahalanobis(x);
                if q <= CUTOFF_Q {
                    let w = p.opacity * (-0.5 * q).exp();
                    for k in 0..3 {
                        acc[k] += w * p.color[k];
                    }
                }
            }
            let o = (row * cam.width + col) * 3;
            img.data[o..o + 3].copy_from_slice(&acc);
        }
    }
    Ok(img)
}
