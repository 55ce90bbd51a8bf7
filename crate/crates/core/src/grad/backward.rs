//! Reverse pass of the additive rasterizer.
//!
//! Given dL/d(pixel), accumulates dL/d(splat attributes) in the flat
//! per-splat layout (μx, μy, sx, sy, θ, α, r, g, b). Each band accumulates
//! into its own buffer; buffers are summed in band order.

use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{first_non_finite, Error, Result};
use crate::raster::Image;
use crate::render::{band_list, check_renderable, prepare_all, RenderOptions, CUTOFF_Q};
use crate::splat::{Scene, SPLAT_PARAMS};

/// Gradients with respect to one splat, before the Σ → (s, θ) chain step.
#[derive(Debug, Clone, Copy, Default)]
struct Accum {
    mu: [f64; 2],
    /// dL/dΣ for entries (xx, xy, yy); xy already counts both off-diagonals.
    sigma: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl Accum {
    fn add(&mut self, o: &Accum) {
        self.mu[0] += o.mu[0];
        self.mu[1] += o.mu[1];
        for k in 0..3 {
            self.sigma[k] += o.sigma[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

/// ∂(Σ_pixels upstream · pixel)/∂(splat params), flat, length `9·N`.
pub fn backward_render(
    scene: &Scene,
    cam: &Camera,
    upstream: &Image,
    opts: RenderOptions,
) -> Result<Vec<f64>> {
    check_renderable(scene, cam)?;
    if upstream.width != cam.width || upstream.height != cam.height {
        return Err(Error::SizeMismatch {
            a_w: upstream.width,
            a_h: upstream.height,
            b_w: cam.width,
            b_h: cam.height,
        });
    }
    if let Some(index) = first_non_finite(&upstream.data) {
        return Err(Error::NonFinite {
            index,
            context: "upstream gradient".into(),
        });
    }

    let prepared = prepare_all(scene, cam);
    let n = prepared.len();
    let (w, h) = (cam.width, cam.height);
    let band_rows = opts.band_rows(h);
    let bands = h.div_ceil(band_rows);

    let partials: Vec<Vec<Accum>> = (0..bands)
        .into_par_iter()
        .map(|band| {
            let r0 = band * band_rows;
            let r1 = (r0 + band_rows).min(h);
            let list = band_list(&prepared, r0, r1);
            let mut acc = vec![Accum::default(); n];
            for row in r0..r1 {
                for col in 0..w {
                    let o = (row * w + col) * 3;
                    let g = [upstream.data[o], upstream.data[o + 1], upstream.data[o + 2]];
                    if g == [0.0; 3] {
                        continue;
                    }
                    let x = cam.pixel_to_world(col, row);
                    for &i in &list {
                        let p = &prepared[i];
                        if !p.covers(col, row) {
                            continue;
                        }
                        let (q, dx, dy) = p.mahalanobis(x);
                        if q > CUTOFF_Q {
                            continue;
                        }
                        let e = (-0.5 * q).exp();
                        let gc = g[0] * p.color[0] + g[1] * p.color[1] + g[2] * p.color[2];
                        let a = &mut acc[i];
                        a.opacity += e * gc;
                        let ae = p.opacity * e;
                        a.color[0] += ae * g[0];
                        a.color[1] += ae * g[1];
                        a.color[2] += ae * g[2];
                        // dL/dq
                        let dq = -0.5 * ae * gc;
                        // v = Σ⁻¹ d;  ∂q/∂μ = −2v;  ∂q/∂Σ = −v vᵀ
                        let v0 = p.inv.xx * dx + p.inv.xy * dy;
                        let v1 = p.inv.xy * dx + p.inv.yy * dy;
                        a.mu[0] -= 2.0 * dq * v0;
                        a.mu[1] -= 2.0 * dq * v1;
                        a.sigma[0] -= dq * v0 * v0;
                        a.sigma[1] -= dq * 2.0 * v0 * v1;
                        a.sigma[2] -= dq * v1 * v1;
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = vec![Accum::default(); n];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            t.add(p);
        }
    }

    let mut grad = vec![0.0; n * SPLAT_PARAMS];
    for ((splat, a), out) in scene
        .splats
        .iter()
        .zip(&total)
        .zip(grad.chunks_exact_mut(SPLAT_PARAMS))
    {
        let (gs, gt) = sigma_to_scale_rotation(a.sigma, splat.scale, splat.rotation);
        out[0] = a.mu[0];
        out[1] = a.mu[1];
        out[2] = gs[0];
        out[3] = gs[1];
        out[4] = gt;
        out[5] = a.opacity;
        out[6..9].copy_from_slice(&a.color);
    }
    if let Some(index) = first_non_finite(&grad) {
        return Err(Error::NonFinite {
            index,
            context: "render gradient".into(),
        });
    }
    Ok(grad)
}

/// Chains dL/dΣ through Σ = R diag(s²) Rᵀ. Returns ([dL/dsx, dL/dsy], dL/dθ).
pub(crate) fn sigma_to_scale_rotation(
    g: [f64; 3],
    scale: [f64; 2],
    rotation: f64,
) -> ([f64; 2], f64) {
    let (sn, cs) = rotation.sin_cos();
    let (sx, sy) = (scale[0], scale[1]);
    let (a, b) = (sx * sx, sy * sy);
    let dsx = g[0] * 2.0 * cs * cs * sx + g[1] * 2.0 * cs * sn * sx + g[2] * 2.0 * sn * sn * sx;
    let dsy = g[0] * 2.0 * sn * sn * sy - g[1] * 2.0 * cs * sn * sy + g[2] * 2.0 * cs * cs * sy;
    let dth = (a - b) * (-2.0 * cs * sn * g[0] + (cs * cs - sn * sn) * g[1] + 2.0 * cs * sn * g[2]);
    ([dsx, dsy], dth)
}
