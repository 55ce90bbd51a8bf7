//! Stage 1, stage 2 and evaluation in one call.

use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig};
use super::fit::{fit_dynamic, init_scene, stage1_fit, LossRow, ScheduleSnapshot};
use super::schedule::TimestepSchedule;
use crate::error::{Error, Result};
use crate::field::{render_at_time, DeformationField};
use crate::metrics::{evaluate, MetricReport};
use crate::render::{render_with, RenderOptions};
use crate::scenegen::LoadedDataset;
use crate::seed::derive_seed;
use crate::splat::Scene;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub scene: Scene,
    pub field: DeformationField,
    pub stage1_metrics: MetricReport,
    pub metrics: MetricReport,
    pub log: Vec<LossRow>,
    pub snapshots: Vec<ScheduleSnapshot>,
    pub schedule: Option<TimestepSchedule>,
    pub interval: usize,
}

/// Summary numbers a report needs without the full rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub stage1_train_psnr: f64,
    pub mean_psnr: f64,
    pub last_quartile_psnr: f64,
}

impl RunOutcome {
    pub fn headline(&self) -> Headline {
        Headline {
            stage1_train_psnr: self.stage1_metrics.mean.psnr_db,
            mean_psnr: self.metrics.mean.psnr_db,
            last_quartile_psnr: self.metrics.last_quartile.psnr_db,
        }
    }
}

/// Fits the static scene at the initial timestep only.
pub fn run_stage1(cfg: &RunConfig, data: &LoadedDataset) -> Result<(Scene, DeformationField, Vec<LossRow>)> {
    cfg.validate()?;
    let frames = &data.frames;
    if cfg.initial_timestep >= frames.num_timesteps() {
        return Err(Error::InvalidInput(format!(
            "initial_timestep {} outside the dataset's {} timesteps",
            cfg.initial_timestep,
            frames.num_timesteps()
        )));
    }
    let field = DeformationField::new(cfg.field, data.spec.bounds, derive_seed(cfg.seed, "field"))?;
    let gt = data.gt_scene();
    let init = init_scene(cfg, &data.spec.bounds, data.spec.background, gt.as_ref(), data.spec.total_splats())?;
    let s1 = stage1_fit(init, frames, cfg.initial_timestep, &field, cfg)?;
    Ok((s1.scene, field, s1.log))
}

/// Metrics of the static scene on the initial timestep's training views.
pub fn stage1_metrics(scene: &Scene, data: &LoadedDataset, timestep: usize, opts: RenderOptions) -> Result<MetricReport> {
    let frames = data.frames.at_timestep(timestep);
    evaluate(|c, _| render_with(scene, &frames.cameras[c], opts), &frames)
}

pub fn evaluate_model(scene: &Scene, field: &DeformationField, data: &LoadedDataset, opts: RenderOptions) -> Result<MetricReport> {
    let frames = &data.frames;
    evaluate(
        |c, t| render_at_time(scene, field, &frames.cameras[c], frames.times[t], opts),
        frames,
    )
}

/// Runs both stages in `cfg.mode` and evaluates every camera and timestep.
pub fn run(cfg: &RunConfig, data: &LoadedDataset) -> Result<RunOutcome> {
    let (scene, field, mut log) = run_stage1(cfg, data)?;
    let opts = RenderOptions::with_tiles(cfg.tiles);
    run_from_stage1(cfg, data, scene, field, &mut log, opts)
}

/// Stage 2 and evaluation starting from an already fitted static scene.
pub fn run_from_stage1(
    cfg: &RunConfig,
    data: &LoadedDataset,
    scene: Scene,
    field: DeformationField,
    log: &mut Vec<LossRow>,
    opts: RenderOptions,
) -> Result<RunOutcome> {
    let stage1_metrics = stage1_metrics(&scene, data, cfg.initial_timestep, opts)?;
    let mut run_cfg = cfg.clone();
    if cfg.mode == Mode::Simultaneous {
        run_cfg.lambda_align = 0.0;
    }
    let s2 = fit_dynamic(scene, field, &data.frames, &run_cfg, cfg.mode)?;
    log.extend(s2.log.iter().copied());
    let metrics = evaluate_model(&s2.scene, &s2.field, data, opts)?;
    Ok(RunOutcome {
        scene: s2.scene,
        field: s2.field,
        stage1_metrics,
        metrics,
        log: std::mem::take(log),
        snapshots: s2.snapshots,
        schedule: s2.schedule,
        interval: s2.interval,
    })
}
