//! Finite-difference check of the full stage-2 objective over every parameter class.
//!
//! The alignment weight w and the cached reference deformations are constants
//! of the analytic gradient, so the probed loss holds them at their values at
//! the base point.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::{Bounds, DeformationField, FieldShape};
use crate::fixtures::{random_scene, test_camera};
use crate::grad::{finite_diff_check, FdReport, FdTolerance};
use crate::raster::Image;
use crate::render::RenderOptions;
use crate::seed::rng_for;
use crate::splat::{Scene, SPLAT_PARAMS};
use crate::trainer::{alignment_weights, dynamic_objective, AlignConfig, AlignTerm, DeformationCache, TimestepSchedule, View};
use crate::error::Result;

/// Parameter classes, in report order.
pub const CLASSES: [&str; 7] = ["mu", "s", "theta", "alpha", "c", "grids", "head"];

pub const SCENES_PER_RUN: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub checked: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub failing: usize,
    /// Coordinates that needed a smaller step to pass.
    pub refined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seeds: Vec<u64>,
    pub classes: Vec<ClassReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.classes.iter().all(|c| c.failing == 0)
    }
}

fn class_of(index: usize, splat_len: usize, grid_len: usize) -> usize {
    if index < splat_len {
        match index % SPLAT_PARAMS {
            0 | 1 => 0,
            2 | 3 => 1,
            4 => 2,
            5 => 3,
            _ => 4,
        }
    } else if index - splat_len < grid_len {
        5
    } else {
        6
    }
}

struct Case {
    scene: Scene,
    field: DeformationField,
    targets: Vec<Image>,
    times: Vec<f64>,
    schedule: TimestepSchedule,
    cache: DeformationCache,
    cfg: AlignConfig,
}

fn build_case(seed: u64) -> Case {
    let mut rng = rng_for(seed, "gradcheck");
    let n = rng.random_range(3..=8);
    let scene = random_scene(seed, n);
    let shape = FieldShape {
        grid_x: 4,
        grid_y: 4,
        grid_t: 3,
        features: 2,
        hidden: [6, 5],
    };
    let bounds = Bounds {
        min: [-1.0, -1.0],
        max: [1.0, 1.0],
    };
    let mut field = DeformationField::new(shape, bounds, seed).expect("valid shape");
    let head = shape.grid_params() + shape.head_params() - (5 * shape.hidden[1] + 5);
    for v in &mut field.params[head..] {
        *v = rng.random_range(-0.15..0.15);
    }
    let targets = (0..2)
        .map(|_| {
            let data = (0..16 * 16 * 3).map(|_| rng.random_range(0.0..0.8)).collect();
            Image::from_data(16, 16, data).expect("sized")
        })
        .collect();
    let schedule = TimestepSchedule::from_sets(BTreeSet::from([0]), BTreeSet::from([1]), BTreeSet::new(), 1, 1)
        .expect("valid partition");
    let mut cache = DeformationCache::default();
    cache.freeze(
        0,
        (0..n)
            .map(|_| [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)])
            .collect(),
    );
    Case {
        scene,
        field,
        targets,
        times: vec![0.25, 0.75],
        schedule,
        cache,
        cfg: AlignConfig {
            w0: 1.0,
            tau: 0.02,
            lambda_l1: 1.0,
            lambda_tv: 1.0,
            lambda_align: 1.0,
        },
    }
}

fn unpack(case: &Case, params: &[f64]) -> Result<(Scene, DeformationField)> {
    let splat_len = case.scene.len() * SPLAT_PARAMS;
    let mut scene = case.scene.clone();
    scene.set_params(&params[..splat_len]);
    let field = DeformationField::from_params(case.field.shape, case.field.bounds, params[splat_len..].to_vec())?;
    Ok((scene, field))
}

/// Alignment weights at `params`, held fixed while the loss is probed.
fn frozen_weights(case: &Case, params: &[f64]) -> Result<BTreeMap<usize, Vec<f64>>> {
    let (scene, field) = unpack(case, params)?;
    let current = case
        .schedule
        .t1
        .iter()
        .map(|&t| {
            let dmu = scene.splats.iter().map(|s| field.sample(s.center, case.times[t]).dmu).collect();
            (t, dmu)
        })
        .collect();
    alignment_weights(&current, &case.schedule, &case.cache, &case.cfg)
}

fn evaluate(case: &Case, params: &[f64], weights: &BTreeMap<usize, Vec<f64>>, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let (scene, field) = unpack(case, params)?;
    let cam = test_camera(16, 16);
    let views: Vec<View> = case
        .targets
        .iter()
        .zip(&case.times)
        .map(|(target, &time)| View {
            camera: &cam,
            time,
            target,
        })
        .collect();
    let term = AlignTerm {
        schedule: &case.schedule,
        cache: &case.cache,
        times: &case.times,
        frozen_weights: Some(weights),
    };
    let ev = dynamic_objective(&scene, &field, &views, &case.cfg, Some(term), want_grad, RenderOptions::with_tiles(2))?;
    let mut grad = Vec::new();
    if want_grad {
        grad = ev.splat_grad.expect("requested");
        grad.extend_from_slice(&ev.field_grad);
    }
    Ok((ev.parts.total, grad))
}

/// Checks scenes `base_seed .. base_seed + SCENES_PER_RUN`. With `corrupt`, one
/// analytic component is perturbed first so the check must fail.
pub fn run_gradcheck(base_seed: u64, corrupt: bool) -> Result<GradcheckReport> {
    let mut per_class: Vec<Vec<FdReport>> = vec![vec![]; CLASSES.len()];
    let seeds: Vec<u64> = (base_seed..base_seed + SCENES_PER_RUN).collect();
    for &seed in &seeds {
        let case = build_case(seed);
        let mut params = case.scene.to_params();
        let splat_len = params.len();
        params.extend_from_slice(&case.field.params);
        let weights = frozen_weights(&case, &params)?;
        let (_, mut grad) = evaluate(&case, &params, &weights, true)?;
        if corrupt && seed == base_seed {
            grad[splat_len + case.field.shape.grid_params() + 1] += 1e-3;
        }
        let loss = |p: &[f64]| evaluate(&case, p, &weights, false).map(|r| r.0).unwrap_or(f64::NAN);
        let all: Vec<usize> = (0..params.len()).collect();
        let report = finite_diff_check(loss, &params, &grad, &all, FdTolerance::default());
        let grid_len = case.field.shape.grid_params();
        for k in 0..CLASSES.len() {
            let entries: Vec<_> = report
                .entries
                .iter()
                .filter(|e| class_of(e.index, splat_len, grid_len) == k)
                .cloned()
                .collect();
            per_class[k].push(summarize(entries, &report.refined));
        }
    }
    let classes = CLASSES
        .iter()
        .zip(per_class)
        .map(|(name, reports)| {
            let m = FdReport::merge(&reports);
            ClassReport {
                class: name.to_string(),
                checked: m.checked,
                max_abs_err: m.max_abs_err,
                max_rel_err: m.max_rel_err,
                failing: m.failing.len(),
                refined: m.refined.len(),
            }
        })
        .collect();
    Ok(GradcheckReport { seeds, classes })
}

fn summarize(entries: Vec<crate::grad::FdEntry>, refined: &[usize]) -> FdReport {
    let tol = FdTolerance::default();
    FdReport {
        checked: entries.len(),
        max_abs_err: entries.iter().map(|e| e.abs_err).fold(0.0, f64::max),
        max_rel_err: entries
            .iter()
            .filter(|e| e.abs_err > tol.abs)
            .map(|e| e.rel_err)
            .fold(0.0, f64::max),
        failing: entries.iter().filter(|e| !e.passed).map(|e| e.index).collect(),
        refined: entries.iter().filter(|e| refined.contains(&e.index)).map(|e| e.index).collect(),
        entries,
    }
}
