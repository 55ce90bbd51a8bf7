use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use progress4d::checkpoint::Checkpoint;
use progress4d::error::Error;
use progress4d::field::render_at_time;
use progress4d::gradcheck::run_gradcheck;
use progress4d::scenegen::{load_dataset, standard_suite, synth_dataset, write_dataset, SceneSpec};
use progress4d::trainer::{evaluate_model, run, run_from_stage1, run_stage1, Mode, RunConfig};
use progress4d::RenderOptions;

use crate::report::{config_hash, loss_csv, AblationReport, AblationRow, FitReport, ScheduleReport};
use crate::Failure;

fn invalid(message: String) -> Failure {
    Failure { code: 2, message }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<(), Failure> {
    let spec: SceneSpec = read_json(spec_path)?;
    spec.validate()
        .map_err(|e| invalid(format!("{}: {e}", spec_path.display())))?;
    let (frames, gt) = synth_dataset(&spec)?;
    write_dataset(out, &spec, &frames, &gt)?;
    Ok(())
}

pub fn synth_suite(out: &Path) -> Result<(), Failure> {
    if !out.exists() {
        fs::create_dir(out).map_err(|e| io_failure(out, e))?;
    }
    for spec in standard_suite() {
        let (frames, gt) = synth_dataset(&spec)?;
        write_dataset(&out.join(&spec.name), &spec, &frames, &gt)?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let cfg = match path {
        Some(p) => read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()
        .map_err(|e| invalid(format!("{}: {e}", path.map(|p| p.display().to_string()).unwrap_or_default())))?;
    Ok(cfg)
}

fn pick(flag: Option<&Path>, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf, Failure> {
    flag.map(Path::to_path_buf)
        .or_else(|| configured.clone())
        .ok_or_else(|| invalid(format!("--{name} is required (flag or config key)")))
}

pub fn fit(dataset: Option<&Path>, config: Option<&Path>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dataset = pick(dataset, &cfg.dataset, "dataset")?;
    let out = pick(out, &cfg.out, "out")?;
    let data = load_dataset(&dataset)?;
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;

    let mut report = FitReport {
        status: "ok",
        error: None,
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: config_hash(&cfg),
        config: cfg.clone(),
        dataset: dataset.display().to_string(),
        stage1_train: None,
        headline: None,
        schedule: None,
        loss_curve: vec![],
        metrics: None,
    };
    let outcome = match run(&cfg, &data) {
        Ok(o) => o,
        Err(e) => {
            let failure = Failure::from(e);
            report.status = if failure.code == 4 { "diverged" } else { "failed" };
            report.error = Some(failure.message.clone());
            write_json(&out.join("report.json"), &report)?;
            return Err(failure);
        }
    };
    let ckpt = Checkpoint {
        scene: outcome.scene.clone(),
        field: outcome.field.clone(),
        cameras: data.frames.cameras.clone(),
    };
    ckpt.save(&out.join("final.pg4d"))?;
    write_text(&out.join("loss_curve.csv"), &loss_csv(&outcome.log))?;
    report.stage1_train = Some(outcome.stage1_metrics.mean);
    report.headline = Some(outcome.headline());
    report.schedule = outcome.schedule.as_ref().map(|s| ScheduleReport {
        interval: outcome.interval,
        terminal: s.is_terminal(),
        snapshots: outcome.snapshots.clone(),
    });
    report.loss_curve = outcome.log.clone();
    report.metrics = Some(outcome.metrics);
    write_json(&out.join("report.json"), &report)
}

pub fn render(checkpoint: &Path, camera: usize, time: f64, out: &Path) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let cam = ckpt.cameras.get(camera).ok_or_else(|| {
        invalid(format!(
            "camera {camera} out of range; checkpoint has {} cameras",
            ckpt.cameras.len()
        ))
    })?;
    if !(0.0..=1.0).contains(&time) {
        return Err(invalid(format!("time {time} outside [0, 1]")));
    }
    let img = render_at_time(&ckpt.scene, &ckpt.field, cam, time, RenderOptions::default())?;
    img.save_png(out)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport<'a> {
    checkpoint: String,
    dataset: String,
    #[serde(flatten)]
    metrics: &'a progress4d::metrics::MetricReport,
}

pub fn eval(checkpoint: &Path, dataset: &Path, report: &Path) -> Result<(), Failure> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut data = load_dataset(dataset)?;
    if ckpt.scene.is_empty() {
        return Err(Error::EmptyScene.into());
    }
    // Score with the dataset's cameras, which the checkpoint normally echoes.
    if ckpt.cameras.len() != data.frames.cameras.len() {
        return Err(invalid(format!(
            "checkpoint has {} cameras, dataset has {}",
            ckpt.cameras.len(),
            data.frames.cameras.len()
        )));
    }
    data.frames.cameras = ckpt.cameras.clone();
    let metrics = evaluate_model(&ckpt.scene, &ckpt.field, &data, RenderOptions::default())?;
    write_json(
        report,
        &EvalReport {
            checkpoint: checkpoint.display().to_string(),
            dataset: dataset.display().to_string(),
            metrics: &metrics,
        },
    )
}

pub fn ablate(suite: &Path, out: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let mut scenes: Vec<PathBuf> = fs::read_dir(suite)
        .map_err(|e| io_failure(suite, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("spec.json").is_file())
        .collect();
    scenes.sort();
    if scenes.is_empty() {
        return Err(invalid(format!("{}: no datasets found", suite.display())));
    }
    fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    let hash = config_hash(&cfg);
    let mut rows = vec![];
    let mut first_failure: Option<Failure> = None;
    for dir in &scenes {
        let name = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let row = |mode, error: Option<String>| AblationRow {
            scene: name.clone(),
            mode,
            config_hash: hash.clone(),
            stage1_psnr: None,
            mean_psnr: None,
            last_quartile_psnr: None,
            error,
        };
        let stage1 = load_dataset(dir).and_then(|data| run_stage1(&cfg, &data).map(|s| (data, s)));
        let (data, (scene, field, log)) = match stage1 {
            Ok(v) => v,
            Err(e) => {
                let f = Failure::from(e);
                for mode in [Mode::Progressive, Mode::Simultaneous] {
                    rows.push(row(mode, Some(f.message.clone())));
                }
                first_failure.get_or_insert(f);
                continue;
            }
        };
        for mode in [Mode::Progressive, Mode::Simultaneous] {
            let run_cfg = cfg.with_mode(mode);
            let result = run_from_stage1(
                &run_cfg,
                &data,
                scene.clone(),
                field.clone(),
                &mut log.clone(),
                RenderOptions::with_tiles(cfg.tiles),
            );
            match result {
                Ok(o) => {
                    let h = o.headline();
                    rows.push(AblationRow {
                        stage1_psnr: Some(h.stage1_train_psnr),
                        mean_psnr: Some(h.mean_psnr),
                        last_quartile_psnr: Some(h.last_quartile_psnr),
                        ..row(mode, None)
                    });
                }
                Err(e) => {
                    let f = Failure::from(e);
                    rows.push(row(mode, Some(f.message.clone())));
                    first_failure.get_or_insert(f);
                }
            }
        }
    }
    let report = AblationReport { rows };
    write_json(&out.join("ablation.json"), &report)?;
    let table = report.table();
    write_text(&out.join("ablation.txt"), &table)?;
    print!("{table}");
    match first_failure {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

pub fn gradcheck(seed: u64, corrupt: bool) -> Result<(), Failure> {
    let report = run_gradcheck(seed, corrupt)?;
    println!("seeds {:?}", report.seeds);
    println!("{:<6} {:>8} {:>12} {:>12} {:>8}", "class", "checked", "max_abs", "max_rel", "failing");
    for c in &report.classes {
        println!(
            "{:<6} {:>8} {:>12.3e} {:>12.3e} {:>8}",
            c.class, c.checked, c.max_abs_err, c.max_rel_err, c.failing
        );
    }
    if report.passed() {
        println!("ok");
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: "gradient check exceeded tolerance".into(),
        })
    }
}
