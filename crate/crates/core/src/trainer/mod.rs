//! Static fitting, progressive dynamic fitting and the all-timesteps baseline.

mod align;
mod config;
mod fit;
mod objective;
mod pipeline;
mod schedule;

pub use align::{alignment_loss, alignment_loss_weighted, alignment_weight, alignment_weights, AlignConfig};
pub use config::{InitMode, Mode, RunConfig, SplatRates};
pub use fit::{
    baseline_fit, effective_interval, fit_dynamic, init_scene, stage1_fit, stage2_fit, LossRow,
    ScheduleSnapshot, Stage1Outcome, Stage2Outcome,
};
pub use objective::{dynamic_objective, l1_loss_and_grad, static_objective, AlignTerm, Evaluated, LossParts, View};
pub use pipeline::{evaluate_model, run, run_from_stage1, run_stage1, stage1_metrics, Headline, RunOutcome};
pub use schedule::{pick_reference, schedule_update, DeformationCache, TimestepSchedule};
