//! Stage 1 (static splats) and stage 2 (deformation field) optimization loops.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{InitMode, Mode, RunConfig, SplatRates};
use super::objective::{dynamic_objective, static_objective, AlignTerm, LossParts, View};
use super::schedule::{schedule_update, DeformationCache, TimestepSchedule};
use crate::error::{first_non_finite, Error, Result};
use crate::field::{tv_loss, Bounds, DeformationField};
use crate::grad::{project_splat_params, AdamState};
use crate::render::RenderOptions;
use crate::scenegen::FrameSet;
use crate::seed::{derive_seed, rng_for};
use crate::splat::{Scene, Splat};

/// Mean loss components over one logging interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub stage: u8,
    /// Last iteration of the interval (1-based count of steps taken).
    pub iteration: usize,
    pub l1: f64,
    pub tv: f64,
    pub align: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSnapshot {
    pub iteration: usize,
    pub t0: Vec<usize>,
    pub t1: Vec<usize>,
    pub t2: Vec<usize>,
}

impl ScheduleSnapshot {
    fn of(iteration: usize, s: &TimestepSchedule) -> Self {
        ScheduleSnapshot {
            iteration,
            t0: s.t0.iter().copied().collect(),
            t1: s.t1.iter().copied().collect(),
            t2: s.t2.iter().copied().collect(),
        }
    }
}

struct Logger {
    stage: u8,
    every: usize,
    acc: LossParts,
    count: usize,
    rows: Vec<LossRow>,
}

impl Logger {
    fn new(stage: u8, every: usize) -> Self {
        Logger {
            stage,
            every,
            acc: LossParts::default(),
            count: 0,
            rows: vec![],
        }
    }

    fn push(&mut self, iteration: usize, p: LossParts) {
        self.acc.l1 += p.l1;
        self.acc.tv += p.tv;
        self.acc.align += p.align;
        self.acc.total += p.total;
        self.count += 1;
        if (iteration + 1) % self.every == 0 {
            self.flush(iteration + 1);
        }
    }

    fn flush(&mut self, iteration: usize) {
        if self.count == 0 {
            return;
        }
        let n = self.count as f64;
        self.rows.push(LossRow {
            stage: self.stage,
            iteration,
            l1: self.acc.l1 / n,
            tv: self.acc.tv / n,
            align: self.acc.align / n,
            total: self.acc.total / n,
        });
        self.acc = LossParts::default();
        self.count = 0;
    }
}

fn diverged(stage: u8, iteration: usize, loss: f64) -> Error {
    Error::Diverged {
        stage: format!("stage {stage}"),
        iteration,
        loss,
    }
}

/// Initial static scene per the configured mode.
pub fn init_scene(cfg: &RunConfig, bounds: &Bounds, background: [f64; 3], gt: Option<&Scene>, default_count: usize) -> Result<Scene> {
    let mut rng = rng_for(cfg.seed, "splat-init");
    match cfg.init {
        InitMode::Random => {
            let n = cfg.model_splats.unwrap_or(default_count);
            let diag = bounds.diagonal();
            let splats = (0..n)
                .map(|_| Splat {
                    center: [
                        rng.random_range(bounds.min[0]..bounds.max[0]),
                        rng.random_range(bounds.min[1]..bounds.max[1]),
                    ],
                    scale: [0.05 * diag, 0.05 * diag],
                    rotation: 0.0,
                    opacity: 0.5,
                    color: [
                        rng.random_range(0.2..0.6),
                        rng.random_range(0.2..0.6),
                        rng.random_range(0.2..0.6),
                    ],
                })
                .collect();
            Ok(Scene::new(splats, background))
        }
        InitMode::GtPerturbed => {
            let gt = gt.ok_or_else(|| {
                Error::InvalidInput("init gt_perturbed needs the dataset's gt_scene.json".into())
            })?;
            let k = cfg.init_noise;
            let mut jitter = |v: f64, scale: f64| v + k * scale * rng.random_range(-1.0..1.0);
            let mut splats = Vec::with_capacity(gt.len());
            for s in &gt.splats {
                let mut p = Splat {
                    center: [jitter(s.center[0], s.scale[0]), jitter(s.center[1], s.scale[1])],
                    scale: [jitter(s.scale[0], s.scale[0]), jitter(s.scale[1], s.scale[1])],
                    rotation: jitter(s.rotation, 1.0),
                    opacity: jitter(s.opacity, 1.0),
                    color: [jitter(s.color[0], 1.0), jitter(s.color[1], 1.0), jitter(s.color[2], 1.0)],
                };
                p.clamp_in_place();
                splats.push(p);
            }
            Ok(Scene::new(splats, background))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stage1Outcome {
    pub scene: Scene,
    pub log: Vec<LossRow>,
}

/// Fits static splats to every camera's frame at `timestep`: L1 + λ_tv·TV,
/// where the TV term belongs to the untouched field and only shifts the loss.
pub fn stage1_fit(
    scene: Scene,
    frames: &FrameSet,
    timestep: usize,
    field: &DeformationField,
    cfg: &RunConfig,
) -> Result<Stage1Outcome> {
    if frames.num_cameras() == 0 || frames.num_timesteps() == 0 {
        return Err(Error::InvalidInput("stage 1 needs at least one frame".into()));
    }
    if timestep >= frames.num_timesteps() {
        return Err(Error::InvalidInput(format!("timestep {timestep} not in the frame set")));
    }
    scene.validate()?;
    let opts = RenderOptions::with_tiles(cfg.tiles);
    let tv = cfg.lambda_tv * tv_loss(field);
    let n = scene.len();
    let mut params = scene.to_params();
    let mut adam = AdamState::new(params.len(), 1.0);
    let mut rng = rng_for(cfg.seed, "stage1-sampler");
    let mut log = Logger::new(1, cfg.log_interval);
    let mut current = scene;
    for it in 0..cfg.stage1_iters {
        let progress = it as f64 / cfg.stage1_iters as f64;
        adam.lr_scale = Some(cfg.stage1_rates.decayed(cfg.stage1_final_ratio, progress).per_param(n));
        let c = rng.random_range(0..frames.num_cameras());
        let (l1, grad) = static_objective(&current, &frames.cameras[c], frames.image(c, timestep), opts)?;
        let total = cfg.lambda_l1 * l1 + tv;
        if !total.is_finite() {
            return Err(diverged(1, it, total));
        }
        let grad: Vec<f64> = grad.iter().map(|g| g * cfg.lambda_l1).collect();
        adam.step(&mut params, &grad).map_err(|_| diverged(1, it, total))?;
        project_splat_params(&mut params);
        if first_non_finite(&params).is_some() {
            return Err(diverged(1, it, total));
        }
        current.set_params(&params);
        log.push(
            it,
            LossParts {
                l1,
                tv: tv / cfg.lambda_tv.max(f64::MIN_POSITIVE),
                align: 0.0,
                total,
            },
        );
    }
    log.flush(cfg.stage1_iters);
    Ok(Stage1Outcome {
        scene: current,
        log: log.rows,
    })
}

#[derive(Debug, Clone)]
pub struct Stage2Outcome {
    pub scene: Scene,
    pub field: DeformationField,
    pub log: Vec<LossRow>,
    pub snapshots: Vec<ScheduleSnapshot>,
    /// Final schedule; `None` in simultaneous mode.
    pub schedule: Option<TimestepSchedule>,
    /// Iterations between schedule updates actually used.
    pub interval: usize,
}

fn current_dmu(scene: &Scene, field: &DeformationField, time: f64) -> Vec<[f64; 2]> {
    scene.splats.iter().map(|s| field.sample(s.center, time).dmu).collect()
}

/// Iterations between schedule updates so that the schedule terminates and a
/// polish phase of at least one interval still fits in `iters`.
pub fn effective_interval(schedule: &TimestepSchedule, iters: usize) -> usize {
    let n = schedule.updates_to_terminal();
    schedule.update_interval.min(iters / (n + 1)).max(1)
}

fn field_adam(field: &DeformationField, cfg: &RunConfig) -> AdamState {
    let g = field.shape.grid_params();
    let scale = (0..field.param_count())
        .map(|i| if i < g { cfg.grid_lr_scale } else { 1.0 })
        .collect();
    AdamState::new(field.param_count(), cfg.lr).with_lr_scale(scale)
}

struct Stage2State<'a> {
    scene: Scene,
    field: DeformationField,
    adam: AdamState,
    splat_adam: Option<AdamState>,
    splat_params: Vec<f64>,
    rng: ChaCha8Rng,
    log: Logger,
    frames: &'a FrameSet,
    cfg: &'a RunConfig,
    opts: RenderOptions,
    bounds_diag: f64,
}

impl Stage2State<'_> {
    fn step(&mut self, it: usize, pool: &[usize], replay: &[usize], align: Option<AlignTerm<'_>>) -> Result<()> {
        let frames = self.frames;
        let c = self.rng.random_range(0..frames.num_cameras());
        let u: f64 = self.rng.random();
        let t = if !replay.is_empty() && u < self.cfg.replay {
            replay[self.rng.random_range(0..replay.len())]
        } else {
            pool[self.rng.random_range(0..pool.len())]
        };
        let view = View {
            camera: &frames.cameras[c],
            time: frames.times[t],
            target: frames.image(c, t),
        };
        let acfg = self.cfg.align(self.bounds_diag);
        let ev = dynamic_objective(
            &self.scene,
            &self.field,
            &[view],
            &acfg,
            align,
            self.splat_adam.is_some(),
            self.opts,
        )?;
        if !ev.parts.is_finite() || first_non_finite(&ev.field_grad).is_some() {
            return Err(diverged(2, it, ev.parts.total));
        }
        self.adam
            .step(&mut self.field.params, &ev.field_grad)
            .map_err(|_| diverged(2, it, ev.parts.total))?;
        if first_non_finite(&self.field.params).is_some() {
            return Err(diverged(2, it, ev.parts.total));
        }
        if let (Some(adam), Some(g)) = (self.splat_adam.as_mut(), ev.splat_grad.as_ref()) {
            adam.step(&mut self.splat_params, g)
                .map_err(|_| diverged(2, it, ev.parts.total))?;
            project_splat_params(&mut self.splat_params);
            if first_non_finite(&self.splat_params).is_some() {
                return Err(diverged(2, it, ev.parts.total));
            }
            self.scene.set_params(&self.splat_params);
        }
        self.log.push(it, ev.parts);
        Ok(())
    }
}

/// Stage 2 in either mode. Both modes run exactly `cfg.stage2_iters` steps and
/// draw (camera, timestep) pairs from the same seeded stream.
///
/// Progressive: every `effective_interval` steps the schedule is updated
/// (T₁ → T₀ with Δμ frozen into the cache, nearest T₂ → T₁); steps sample T₁
/// and include the alignment term. Once terminal, the remaining steps polish
/// over all timesteps. Simultaneous: all timesteps throughout, no alignment.
pub fn fit_dynamic(scene: Scene, field: DeformationField, frames: &FrameSet, cfg: &RunConfig, mode: Mode) -> Result<Stage2Outcome> {
    frames.validate()?;
    scene.validate()?;
    let nt = frames.num_timesteps();
    let all: Vec<usize> = (0..nt).collect();
    let splat_params = scene.to_params();
    let splat_adam = cfg.unfreeze_splats.then(|| {
        AdamState::new(splat_params.len(), 1.0)
            .with_lr_scale(scaled_rates(&cfg.stage1_rates, cfg.stage1_final_ratio).per_param(scene.len()))
    });
    let mut st = Stage2State {
        adam: field_adam(&field, cfg),
        bounds_diag: field.bounds.diagonal(),
        scene,
        field,
        splat_adam,
        splat_params,
        rng: rand::SeedableRng::seed_from_u64(derive_seed(cfg.seed, "stage2-sampler")),
        log: Logger::new(2, cfg.log_interval),
        frames,
        cfg,
        opts: RenderOptions::with_tiles(cfg.tiles),
    };

    match mode {
        Mode::Simultaneous => {
            for it in 0..cfg.stage2_iters {
                st.step(it, &all, &[], None)?;
            }
            st.log.flush(cfg.stage2_iters);
            Ok(Stage2Outcome {
                scene: st.scene,
                field: st.field,
                log: st.log.rows,
                snapshots: vec![],
                schedule: None,
                interval: cfg.stage2_iters,
            })
        }
        Mode::Progressive => {
            let mut schedule =
                TimestepSchedule::progressive(nt, cfg.initial_timestep, cfg.window, cfg.update_interval)?;
            let interval = effective_interval(&schedule, cfg.stage2_iters);
            let mut cache = DeformationCache::default();
            let t_init = cfg.initial_timestep;
            cache.freeze(t_init, current_dmu(&st.scene, &st.field, frames.times[t_init]));
            let mut snapshots = vec![ScheduleSnapshot::of(0, &schedule)];
            for it in 0..cfg.stage2_iters {
                if it > 0 && it % interval == 0 && !schedule.is_terminal() {
                    let (scene, field) = (&st.scene, &st.field);
                    schedule_update(&mut schedule, &mut cache, |t| current_dmu(scene, field, frames.times[t]));
                    schedule.check_partition(nt)?;
                    snapshots.push(ScheduleSnapshot::of(it, &schedule));
                }
                if schedule.t1.is_empty() {
                    st.step(it, &all, &[], None)?;
                } else {
                    let pool: Vec<usize> = schedule.t1.iter().copied().collect();
                    let replay: Vec<usize> = schedule.t0.iter().copied().collect();
                    let term = AlignTerm {
                        schedule: &schedule,
                        cache: &cache,
                        times: &frames.times,
                        frozen_weights: None,
                    };
                    st.step(it, &pool, &replay, Some(term))?;
                }
            }
            st.log.flush(cfg.stage2_iters);
            Ok(Stage2Outcome {
                scene: st.scene,
                field: st.field,
                log: st.log.rows,
                snapshots,
                schedule: Some(schedule),
                interval,
            })
        }
    }
}

fn scaled_rates(r: &SplatRates, ratio: f64) -> SplatRates {
    r.decayed(ratio, 1.0)
}

/// Progressive stage 2.
pub fn stage2_fit(scene: Scene, field: DeformationField, frames: &FrameSet, cfg: &RunConfig) -> Result<Stage2Outcome> {
    fit_dynamic(scene, field, frames, cfg, Mode::Progressive)
}

/// All-timesteps stage 2 without the alignment term, same budget.
pub fn baseline_fit(scene: Scene, field: DeformationField, frames: &FrameSet, cfg: &RunConfig) -> Result<Stage2Outcome> {
    let mut c = cfg.clone();
    c.lambda_align = 0.0;
    fit_dynamic(scene, field, frames, &c, Mode::Simultaneous)
}
