//! Tri-plane deformation field.
//!
//! Three feature planes over normalized (x, y), (x, t) and (y, t) are sampled
//! bilinearly at a splat's canonical center and time, concatenated, and decoded
//! by a two-hidden-layer tanh network into (Δμx, Δμy, Δsx, Δsy, Δθ). The
//! decoder's output layer starts at zero, so a fresh field is the identity.
//!
//! Flat parameter layout: plane_xy, plane_xt, plane_yt (each row-major
//! `A × B × F`), then W1, b1, W2, b2, W3, b3 (weights row-major `out × in`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::render::{render_with, RenderOptions};
use crate::seed::rng_for;
use crate::splat::{Scene, Splat, SPLAT_PARAMS, S_MIN};

pub const DEFORM_OUTPUTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldShape {
    pub grid_x: usize,
    pub grid_y: usize,
    pub grid_t: usize,
    pub features: usize,
    pub hidden: [usize; 2],
}

impl Default for FieldShape {
    fn default() -> Self {
        FieldShape {
            grid_x: 16,
            grid_y: 16,
            grid_t: 16,
            features: 8,
            hidden: [64, 64],
        }
    }
}

impl FieldShape {
    pub fn validate(&self) -> Result<()> {
        if self.grid_x < 2 || self.grid_y < 2 || self.grid_t < 2 {
            return Err(Error::InvalidInput("grid sizes must be at least 2".into()));
        }
        if self.features == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidInput(
                "feature and hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }

    fn plane_dims(&self) -> [(usize, usize); 3] {
        [
            (self.grid_x, self.grid_y),
            (self.grid_x, self.grid_t),
            (self.grid_y, self.grid_t),
        ]
    }

    pub fn plane_len(&self, plane: usize) -> usize {
        let (a, b) = self.plane_dims()[plane];
        a * b * self.features
    }

    pub fn grid_params(&self) -> usize {
        (0..3).map(|p| self.plane_len(p)).sum()
    }

    pub fn head_params(&self) -> usize {
        let i = 3 * self.features;
        let [h1, h2] = self.hidden;
        h1 * i + h1 + h2 * h1 + h2 + DEFORM_OUTPUTS * h2 + DEFORM_OUTPUTS
    }

    pub fn param_count(&self) -> usize {
        self.grid_params() + self.head_params()
    }
}

/// Axis-aligned world rectangle used to normalize canonical centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let ok = (0..2).all(|k| {
            self.min[k].is_finite() && self.max[k].is_finite() && self.max[k] > self.min[k]
        });
        if !ok {
            return Err(Error::InvalidInput(format!("degenerate bounds {self:?}")));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        let dx = self.max[0] - self.min[0];
        let dy = self.max[1] - self.min[1];
        (dx * dx + dy * dy).sqrt()
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Deformation {
    pub dmu: [f64; 2],
    pub dscale: [f64; 2],
    pub drot: f64,
}

impl Deformation {
    fn from_outputs(o: &[f64]) -> Self {
        Deformation {
            dmu: [o[0], o[1]],
            dscale: [o[2], o[3]],
            drot: o[4],
        }
    }
}

/// μ' = μ + Δμ, s' = max(s + Δs, s_min), θ' = θ + Δθ; opacity and color untouched.
pub fn apply_deformation(splat: &Splat, d: &Deformation) -> Splat {
    Splat {
        center: [splat.center[0] + d.dmu[0], splat.center[1] + d.dmu[1]],
        scale: [
            (splat.scale[0] + d.dscale[0]).max(S_MIN),
            (splat.scale[1] + d.dscale[1]).max(S_MIN),
        ],
        rotation: splat.rotation + d.drot,
        opacity: splat.opacity,
        color: splat.color,
    }
}

/// Bilinear lookup position within one plane.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    i0: usize,
    j0: usize,
    fa: f64,
    fb: f64,
}

/// Maps u ∈ [0,1] onto a grid axis of `n` nodes. Returns (lower node, fraction).
fn locate(u: f64, n: usize) -> (usize, f64) {
    let c = u * (n - 1) as f64;
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, c - i0 as f64)
}

/// Forward activations saved for the reverse pass.
#[derive(Debug, Clone)]
pub struct FieldTrace {
    /// d(normalized coord)/d(world coord) for x and y; zero where clamped.
    coord_jac: [f64; 2],
    cells: [Cell; 3],
    feat: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub out: [f64; DEFORM_OUTPUTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub shape: FieldShape,
    pub bounds: Bounds,
    /// Grids followed by decoder weights, in the documented layout.
    pub params: Vec<f64>,
}

impl DeformationField {
    /// Random grid features and hidden weights; output layer exactly zero.
    pub fn new(shape: FieldShape, bounds: Bounds, seed: u64) -> Result<Self> {
        shape.validate()?;
        bounds.validate()?;
        let mut rng = rng_for(seed, "field-init");
        let mut params = Vec::with_capacity(shape.param_count());
        for _ in 0..shape.grid_params() {
            params.push(rng.random_range(-GRID_INIT..GRID_INIT));
        }
        let inputs = 3 * shape.features;
        let [h1, h2] = shape.hidden;
        let mut xavier = |fan_in: usize, fan_out: usize, params: &mut Vec<f64>| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-a..a));
            }
        };
        xavier(inputs, h1, &mut params);
        params.extend(std::iter::repeat_n(0.0, h1));
        xavier(h1, h2, &mut params);
        params.extend(std::iter::repeat_n(0.0, h2));
        params.extend(std::iter::repeat_n(0.0, DEFORM_OUTPUTS * h2 + DEFORM_OUTPUTS));
        debug_assert_eq!(params.len(), shape.param_count());
        Ok(DeformationField {
            shape,
            bounds,
            params,
        })
    }

    pub fn from_params(shape: FieldShape, bounds: Bounds, params: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        bounds.validate()?;
        if params.len() != shape.param_count() {
            return Err(Error::InvalidInput(format!(
                "field expects {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        Ok(DeformationField {
            shape,
            bounds,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn grid_params(&self) -> &[f64] {
        &self.params[..self.shape.grid_params()]
    }

    fn plane_offsets(&self) -> [usize; 3] {
        let a = self.shape.plane_len(0);
        let b = self.shape.plane_len(1);
        [0, a, a + b]
    }

    /// Offsets of (W1, b1, W2, b2, W3, b3) within `params`.
    fn head_offsets(&self) -> [usize; 6] {
        let i = 3 * self.shape.features;
        let [h1, h2] = self.shape.hidden;
        let w1 = self.shape.grid_params();
        let b1 = w1 + h1 * i;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + DEFORM_OUTPUTS * h2;
        [w1, b1, w2, b2, w3, b3]
    }

    /// Normalized coordinates and their world-space derivative (zero when clamped).
    fn normalize(&self, center: [f64; 2], t: f64) -> ([f64; 3], [f64; 2]) {
        let mut coords = [0.0; 3];
        let mut jac = [0.0; 2];
        for k in 0..2 {
            let span = self.bounds.max[k] - self.bounds.min[k];
            let u = (center[k] - self.bounds.min[k]) / span;
            if (0.0..=1.0).contains(&u) {
                coords[k] = u;
                jac[k] = 1.0 / span;
            } else {
                coords[k] = u.clamp(0.0, 1.0);
            }
        }
        coords[2] = t.clamp(0.0, 1.0);
        (coords, jac)
    }

    /// Forward pass; returns the deformation and the saved activations.
    pub fn forward(&self, center: [f64; 2], t: f64) -> (Deformation, FieldTrace) {
        let s = &self.shape;
        let f = s.features;
        let (coords, coord_jac) = self.normalize(center, t);
        let axes = [(0, 1), (0, 2), (1, 2)];
        let dims = s.plane_dims();
        let offs = self.plane_offsets();
        let mut feat = vec![0.0; 3 * f];
        let mut cells = [Cell::default(); 3];
        for p in 0..3 {
            let (a, b) = dims[p];
            let (i0, fa) = locate(coords[axes[p].0], a);
            let (j0, fb) = locate(coords[axes[p].1], b);
            cells[p] = Cell { i0, j0, fa, fb };
            let plane = &self.params[offs[p]..offs[p] + s.plane_len(p)];
            let at = |i: usize, j: usize| (i * b + j) * f;
            let (c00, c01, c10, c11) = (at(i0, j0), at(i0, j0 + 1), at(i0 + 1, j0), at(i0 + 1, j0 + 1));
            let w00 = (1.0 - fa) * (1.0 - fb);
            let w01 = (1.0 - fa) * fb;
            let w10 = fa * (1.0 - fb);
            let w11 = fa * fb;
            for k in 0..f {
                feat[p * f + k] = w00 * plane[c00 + k]
                    + w01 * plane[c01 + k]
                    + w10 * plane[c10 + k]
                    + w11 * plane[c11 + k];
            }
        }

        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.head_offsets();
        let [h1n, h2n] = s.hidden;
        let inputs = 3 * f;
        let h1 = dense_tanh(&self.params[ow1..], &self.params[ob1..], &feat, h1n, inputs);
        let h2 = dense_tanh(&self.params[ow2..], &self.params[ob2..], &h1, h2n, h1n);
        let mut out = [0.0; DEFORM_OUTPUTS];
        for (o, v) in out.iter_mut().enumerate() {
            let row = &self.params[ow3 + o * h2n..ow3 + (o + 1) * h2n];
            let mut acc = self.params[ob3 + o];
            for (w, x) in row.iter().zip(&h2) {
                acc += w * x;
            }
            *v = acc;
        }
        let trace = FieldTrace {
            coord_jac,
            cells,
            feat,
            h1,
            h2,
            out,
        };
        (Deformation::from_outputs(&out), trace)
    }

    pub fn sample(&self, center: [f64; 2], t: f64) -> Deformation {
        self.forward(center, t).0
    }

    /// Reverse pass for one query. Adds dL/dparams into `grad` and returns dL/d(center).
    pub fn backward(&self, trace: &FieldTrace, d_out: &[f64; DEFORM_OUTPUTS], grad: &mut [f64]) -> [f64; 2] {
        let s = &self.shape;
        let f = s.features;
        let inputs = 3 * f;
        let [h1n, h2n] = s.hidden;
        let [ow1, ob1, ow2, ob2, ow3, ob3] = self.head_offsets();

        // Output layer.
        let mut dh2 = vec![0.0; h2n];
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad[ob3 + o] += g;
            let row = ow3 + o * h2n;
            for k in 0..h2n {
                grad[row + k] += g * trace.h2[k];
                dh2[k] += g * self.params[row + k];
            }
        }
        // Second hidden layer.
        let mut dh1 = vec![0.0; h1n];
        for k in 0..h2n {
            let dz = dh2[k] * (1.0 - trace.h2[k] * trace.h2[k]);
            if dz == 0.0 {
                continue;
            }
            grad[ob2 + k] += dz;
            let row = ow2 + k * h1n;
            for j in 0..h1n {
                grad[row + j] += dz * trace.h1[j];
                dh1[j] += dz * self.params[row + j];
            }
        }
        // First hidden layer.
        let feat = &trace.feat;
        let mut dfeat = vec![0.0; inputs];
        for k in 0..h1n {
            let dz = dh1[k] * (1.0 - trace.h1[k] * trace.h1[k]);
            if dz == 0.0 {
                continue;
            }
            grad[ob1 + k] += dz;
            let row = ow1 + k * inputs;
            for j in 0..inputs {
                grad[row + j] += dz * feat[j];
                dfeat[j] += dz * self.params[row + j];
            }
        }

        // Planes, and the query coordinates through the bilinear weights.
        let axes = [(0usize, 1usize), (0, 2), (1, 2)];
        let dims = s.plane_dims();
        let offs = self.plane_offsets();
        let mut dcoord = [0.0; 3];
        for p in 0..3 {
            let (a, b) = dims[p];
            let Cell { i0, j0, fa, fb } = trace.cells[p];
            let at = |i: usize, j: usize| offs[p] + (i * b + j) * f;
            let (c00, c01, c10, c11) = (at(i0, j0), at(i0, j0 + 1), at(i0 + 1, j0), at(i0 + 1, j0 + 1));
            let w00 = (1.0 - fa) * (1.0 - fb);
            let w01 = (1.0 - fa) * fb;
            let w10 = fa * (1.0 - fb);
            let w11 = fa * fb;
            let (mut dfa, mut dfb) = (0.0, 0.0);
            for k in 0..f {
                let g = dfeat[p * f + k];
                if g == 0.0 {
                    continue;
                }
                grad[c00 + k] += w00 * g;
                grad[c01 + k] += w01 * g;
                grad[c10 + k] += w10 * g;
                grad[c11 + k] += w11 * g;
                let (v00, v01, v10, v11) = (
                    self.params[c00 + k],
                    self.params[c01 + k],
                    self.params[c10 + k],
                    self.params[c11 + k],
                );
                dfa += g * ((1.0 - fb) * (v10 - v00) + fb * (v11 - v01));
                dfb += g * ((1.0 - fa) * (v01 - v00) + fa * (v11 - v10));
            }
            dcoord[axes[p].0] += dfa * (a - 1) as f64;
            dcoord[axes[p].1] += dfb * (b - 1) as f64;
        }
        [dcoord[0] * trace.coord_jac[0], dcoord[1] * trace.coord_jac[1]]
    }
}

const GRID_INIT: f64 = 0.5;

fn dense_tanh(w: &[f64], b: &[f64], x: &[f64], outs: usize, ins: usize) -> Vec<f64> {
    (0..outs)
        .map(|o| {
            let row = &w[o * ins..(o + 1) * ins];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            acc.tanh()
        })
        .collect()
}

/// Number of adjacent-cell pairs summed by [`tv_loss`].
pub fn tv_pair_count(shape: &FieldShape) -> usize {
    shape
        .plane_dims()
        .iter()
        .map(|&(a, b)| shape.features * ((a - 1) * b + a * (b - 1)))
        .sum()
}

/// Mean squared difference over every adjacent pair of cells along both axes
/// of all three planes and all features.
pub fn tv_loss(field: &DeformationField) -> f64 {
    tv_loss_and_grad(field, None)
}

/// Same as [`tv_loss`]; if `grad` is given, adds `scale · dL_tv/dparams` to it.
pub fn tv_loss_and_grad(field: &DeformationField, mut grad: Option<(&mut [f64], f64)>) -> f64 {
    let s = &field.shape;
    let f = s.features;
    let norm = 1.0 / tv_pair_count(s) as f64;
    let offs = field.plane_offsets();
    let mut total = 0.0;
    for (p, &(a, b)) in s.plane_dims().iter().enumerate() {
        let base = offs[p];
        let at = |i: usize, j: usize, k: usize| base + (i * b + j) * f + k;
        for i in 0..a {
            for j in 0..b {
                for k in 0..f {
                    let v = field.params[at(i, j, k)];
                    if i + 1 < a {
                        let n = at(i + 1, j, k);
                        let d = field.params[n] - v;
                        total += d * d;
                        if let Some((g, scale)) = grad.as_mut() {
                            let gd = 2.0 * d * norm * *scale;
                            g[n] += gd;
                            g[at(i, j, k)] -= gd;
                        }
                    }
                    if j + 1 < b {
                        let n = at(i, j + 1, k);
                        let d = field.params[n] - v;
                        total += d * d;
                        if let Some((g, scale)) = grad.as_mut() {
                            let gd = 2.0 * d * norm * *scale;
                            g[n] += gd;
                            g[at(i, j, k)] -= gd;
                        }
                    }
                }
            }
        }
    }
    total * norm
}

/// Deformed copy of `scene` at time `t`, plus one trace per splat.
pub fn deform_scene(scene: &Scene, field: &DeformationField, t: f64) -> (Scene, Vec<FieldTrace>) {
    let mut traces = Vec::with_capacity(scene.splats.len());
    let splats = scene
        .splats
        .iter()
        .map(|s| {
            let (d, tr) = field.forward(s.center, t);
            traces.push(tr);
            apply_deformation(s, &d)
        })
        .collect();
    (Scene::new(splats, scene.background), traces)
}

/// Chains dL/d(deformed splat params) back to the canonical splats and the field.
///
/// `splat_grad` (length 9·N) receives canonical-splat gradients, including the
/// path through the field's query coordinates; `field_grad` receives field
/// parameter gradients. Both are accumulated into.
pub fn backward_deformation(
    scene: &Scene,
    field: &DeformationField,
    traces: &[FieldTrace],
    deformed_grad: &[f64],
    mut splat_grad: Option<&mut [f64]>,
    field_grad: &mut [f64],
) {
    for (i, (splat, trace)) in scene.splats.iter().zip(traces).enumerate() {
        let g = &deformed_grad[i * SPLAT_PARAMS..(i + 1) * SPLAT_PARAMS];
        let live = [
            splat.scale[0] + trace.out[2] >= S_MIN,
            splat.scale[1] + trace.out[3] >= S_MIN,
        ];
        let gs = [
            if live[0] { g[2] } else { 0.0 },
            if live[1] { g[3] } else { 0.0 },
        ];
        let d_out = [g[0], g[1], gs[0], gs[1], g[4]];
        let dcenter = field.backward(trace, &d_out, field_grad);
        if let Some(sg) = splat_grad.as_deref_mut() {
            let o = &mut sg[i * SPLAT_PARAMS..(i + 1) * SPLAT_PARAMS];
            o[0] += g[0] + dcenter[0];
            o[1] += g[1] + dcenter[1];
            o[2] += gs[0];
            o[3] += gs[1];
            for k in 4..SPLAT_PARAMS {
                o[k] += g[k];
            }
        }
    }
}

/// Renders `scene` with every splat deformed by the field at time `t`.
/// The field is always queried at canonical (t = 0) centers.
pub fn render_at_time(
    scene: &Scene,
    field: &DeformationField,
    cam: &Camera,
    t: f64,
    opts: RenderOptions,
) -> Result<Image> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("time {t} outside [0,1]")));
    }
    let (deformed, _) = deform_scene(scene, field, t);
    render_with(&deformed, cam, opts)
}
