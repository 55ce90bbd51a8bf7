use serde::Serialize;
use sha2::{Digest, Sha256};

use progress4d::metrics::{Aggregate, MetricReport};
use progress4d::trainer::{Headline, LossRow, Mode, RunConfig, ScheduleSnapshot};

/// SHA-256 of the configuration with the mode and paths left out, so paired
/// runs of the two modes record the same hash.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(m) = v.as_object_mut() {
        for key in ["mode", "dataset", "out"] {
            m.remove(key);
        }
    }
    let text = serde_json::to_string(&v).expect("value serializes");
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct ScheduleReport {
    pub interval: usize,
    pub terminal: bool,
    pub snapshots: Vec<ScheduleSnapshot>,
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub status: &'static str,
    pub error: Option<String>,
    pub mode: Mode,
    pub seed: u64,
    pub config_hash: String,
    pub config: RunConfig,
    pub dataset: String,
    pub stage1_train: Option<Aggregate>,
    pub headline: Option<Headline>,
    pub schedule: Option<ScheduleReport>,
    pub loss_curve: Vec<LossRow>,
    pub metrics: Option<MetricReport>,
}

pub fn loss_csv(rows: &[LossRow]) -> String {
    let mut out = String::from("stage,iteration,l1,tv,align,total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            r.stage, r.iteration, r.l1, r.tv, r.align, r.total
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub scene: String,
    pub mode: Mode,
    pub config_hash: String,
    pub stage1_psnr: Option<f64>,
    pub mean_psnr: Option<f64>,
    pub last_quartile_psnr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:>9.3}"),
        Some(_) => format!("{:>9}", "inf"),
        None => format!("{:>9}", "-"),
    }
}

impl AblationReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<8} {:<13} {:>9} {:>9} {:>9}\n",
            "scene", "mode", "stage1", "mean", "last_q"
        );
        for r in &self.rows {
            let mode = match r.mode {
                Mode::Progressive => "progressive",
                Mode::Simultaneous => "simultaneous",
            };
            out.push_str(&format!(
                "{:<8} {:<13} {} {} {}",
                r.scene,
                mode,
                cell(r.stage1_psnr),
                cell(r.mean_psnr),
                cell(r.last_quartile_psnr)
            ));
            if let Some(e) = &r.error {
                out.push_str(&format!("  error: {e}"));
            }
            out.push('\n');
        }
        out
    }
}
