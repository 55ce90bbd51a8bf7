//! Training objective: image L1, grid TV and the alignment term, with gradients.

use std::collections::BTreeMap;

use super::align::{alignment_loss_weighted, AlignConfig};
use super::schedule::{DeformationCache, TimestepSchedule};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::field::{backward_deformation, deform_scene, tv_loss_and_grad, DeformationField};
use crate::grad::backward_render;
use crate::raster::Image;
use crate::render::{render_with, RenderOptions};
use crate::splat::{Scene, SPLAT_PARAMS};

/// Mean absolute difference and its subgradient (sign / N, zero at ties).
pub fn l1_loss_and_grad(pred: &Image, target: &Image) -> Result<(f64, Image)> {
    pred.same_size(target)?;
    let n = pred.data.len() as f64;
    let mut grad = Image::new(pred.width, pred.height);
    let mut total = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        total += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((total / n, grad))
}

/// One supervised image: a camera, a normalized time and the frame to match.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub camera: &'a Camera,
    pub time: f64,
    pub target: &'a Image,
}

/// The alignment term's inputs: the partition, the frozen cache and timestep → time.
#[derive(Debug, Clone, Copy)]
pub struct AlignTerm<'a> {
    pub schedule: &'a TimestepSchedule,
    pub cache: &'a DeformationCache,
    pub times: &'a [f64],
    /// Weights to use instead of recomputing them; lets a finite-difference
    /// oracle hold w fixed the way the analytic gradient does.
    pub frozen_weights: Option<&'a BTreeMap<usize, Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossParts {
    pub l1: f64,
    pub tv: f64,
    pub align: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.l1.is_finite() && self.tv.is_finite() && self.align.is_finite() && self.total.is_finite()
    }
}

#[derive(Debug, Clone)]
pub struct Evaluated {
    pub parts: LossParts,
    pub field_grad: Vec<f64>,
    /// Canonical-splat gradient, present when requested.
    pub splat_grad: Option<Vec<f64>>,
}

/// λ_l1 · Σ_views L1 + λ_tv · TV + λ_align · Σ_{t₁} L_align.
pub fn dynamic_objective(
    scene: &Scene,
    field: &DeformationField,
    views: &[View<'_>],
    cfg: &AlignConfig,
    align: Option<AlignTerm<'_>>,
    want_splat_grad: bool,
    opts: RenderOptions,
) -> Result<Evaluated> {
    let n = scene.splats.len();
    let mut field_grad = vec![0.0; field.param_count()];
    let mut splat_grad = want_splat_grad.then(|| vec![0.0; n * SPLAT_PARAMS]);
    let mut parts = LossParts::default();

    for view in views {
        let (deformed, traces) = deform_scene(scene, field, view.time);
        let pred = render_with(&deformed, view.camera, opts)?;
        let (l1, mut up) = l1_loss_and_grad(&pred, view.target)?;
        parts.l1 += l1;
        for g in &mut up.data {
            *g *= cfg.lambda_l1;
        }
        let dg = backward_render(&deformed, view.camera, &up, opts)?;
        backward_deformation(scene, field, &traces, &dg, splat_grad.as_deref_mut(), &mut field_grad);
    }

    parts.tv = tv_loss_and_grad(field, Some((&mut field_grad, cfg.lambda_tv)));

    if let Some(a) = align.filter(|a| cfg.lambda_align > 0.0 && !a.schedule.t1.is_empty()) {
        let mut current = BTreeMap::new();
        let mut traces = BTreeMap::new();
        for &t1 in &a.schedule.t1 {
            let time = *a.times.get(t1).ok_or_else(|| {
                Error::InvalidInput(format!("timestep {t1} has no timestamp"))
            })?;
            let (dmu, tr): (Vec<[f64; 2]>, Vec<_>) = scene
                .splats
                .iter()
                .map(|s| {
                    let (d, tr) = field.forward(s.center, time);
                    (d.dmu, tr)
                })
                .unzip();
            current.insert(t1, dmu);
            traces.insert(t1, tr);
        }
        let (loss, grads) = alignment_loss_weighted(&current, a.schedule, a.cache, cfg, a.frozen_weights)?;
        parts.align = loss;
        for (t1, g) in grads {
            for (i, (gi, tr)) in g.iter().zip(&traces[&t1]).enumerate() {
                if gi[0] == 0.0 && gi[1] == 0.0 {
                    continue;
                }
                let d_out = [cfg.lambda_align * gi[0], cfg.lambda_align * gi[1], 0.0, 0.0, 0.0];
                let dc = field.backward(tr, &d_out, &mut field_grad);
                if let Some(sg) = splat_grad.as_deref_mut() {
                    sg[i * SPLAT_PARAMS] += dc[0];
                    sg[i * SPLAT_PARAMS + 1] += dc[1];
                }
            }
        }
    }

    parts.total = cfg.lambda_l1 * parts.l1 + cfg.lambda_tv * parts.tv + cfg.lambda_align * parts.align;
    Ok(Evaluated {
        parts,
        field_grad,
        splat_grad,
    })
}

/// L1 of the undeformed scene against one view, and the splat gradient.
pub fn static_objective(scene: &Scene, cam: &Camera, target: &Image, opts: RenderOptions) -> Result<(f64, Vec<f64>)> {
    let pred = render_with(scene, cam, opts)?;
    let (l1, up) = l1_loss_and_grad(&pred, target)?;
    let grad = backward_render(scene, cam, &up, opts)?;
    Ok((l1, grad))
}
