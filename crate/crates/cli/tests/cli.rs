use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use progress4d::scenegen::{standard_suite, SceneSpec};

fn pg4d(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pg4d"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("PG4D_THREADS", n),
        None => cmd.env_remove("PG4D_THREADS"),
    };
    cmd.output().expect("spawn pg4d")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_spec() -> SceneSpec {
    let mut spec = standard_suite().remove(3);
    spec.name = "tiny".into();
    spec.cameras.count = 3;
    spec.timesteps = 5;
    spec.resolution = [20, 20];
    spec.background_splats = 5;
    spec.foreground[0].splats = 3;
    spec
}

fn write_json(path: &Path, v: &impl serde::Serialize) {
    fs::write(path, serde_json::to_string(v).unwrap()).unwrap();
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// Synthesizes the tiny dataset and returns (tempdir, dataset path).
fn dataset() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_json(&spec, &tiny_spec());
    let data = dir.path().join("data");
    let out = pg4d(&["synth", "--spec", s(&spec), "--out", s(&data)], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    (dir, data)
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = dir.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"stage1_iters": 80, "stage2_iters": 80, "update_interval": 10, "log_interval": 20}"#,
    )
    .unwrap();
    cfg
}

#[test]
fn synth_is_byte_identical() {
    let (dir, data) = dataset();
    let again = dir.path().join("again");
    let out = pg4d(&["synth", "--spec", s(&dir.path().join("spec.json")), "--out", s(&again)], Some("3"));
    assert_eq!(code(&out), 0);
    let a = files(&data);
    assert_eq!(a.len(), 4 + 3 * 5);
    assert_eq!(a, files(&again));
}

#[test]
fn synth_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write_json(&spec, &tiny_spec());
    let missing = dir.path().join("no/such/parent/out");
    assert_eq!(code(&pg4d(&["synth", "--spec", s(&spec), "--out", s(&missing)], None)), 3);
    assert_eq!(code(&pg4d(&["synth", "--suite", "--out", s(&missing)], None)), 3);

    let mut v = serde_json::to_value(tiny_spec()).unwrap();
    v["bogus"] = 1.into();
    write_json(&spec, &v);
    assert_eq!(code(&pg4d(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("x"))], None)), 2);

    let mut bad = tiny_spec();
    bad.timesteps = 0;
    write_json(&spec, &bad);
    assert_eq!(code(&pg4d(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("y"))], None)), 2);

    assert_eq!(code(&pg4d(&["gradcheck"], Some("0"))), 2);
    assert_eq!(code(&pg4d(&["gradcheck"], Some("many"))), 2);
}

fn fit(data: &Path, cfg: &Path, out: &Path, threads: &str) -> serde_json::Value {
    let o = pg4d(&["fit", "--dataset", s(data), "--config", s(cfg), "--out", s(out)], Some(threads));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn fit_render_eval() {
    let (dir, data) = dataset();
    let cfg = small_config(dir.path());
    let run1 = dir.path().join("run1");
    let run8 = dir.path().join("run8");
    let r1 = fit(&data, &cfg, &run1, "1");
    let r8 = fit(&data, &cfg, &run8, "8");
    assert_eq!(r1["status"], "ok");
    assert_eq!(r1["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r1["headline"], r8["headline"]);
    assert_eq!(fs::read(run1.join("final.pg4d")).unwrap(), fs::read(run8.join("final.pg4d")).unwrap());
    assert!(r1["schedule"]["terminal"].as_bool().unwrap());
    let csv = fs::read_to_string(run1.join("loss_curve.csv")).unwrap();
    assert!(csv.starts_with("stage,iteration,l1,tv,align,total\n"));
    assert!(csv.lines().count() > 2);

    let ckpt = run1.join("final.pg4d");
    let png = dir.path().join("frame.png");
    let ok = pg4d(&["render", "--checkpoint", s(&ckpt), "--camera", "2", "--time", "0.5", "--out", s(&png)], None);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let img = progress4d::raster::Image::load_png(&png).unwrap();
    assert_eq!((img.width, img.height), (20, 20));
    assert_eq!(
        code(&pg4d(&["render", "--checkpoint", s(&ckpt), "--camera", "3", "--time", "0.5", "--out", s(&png)], None)),
        2
    );
    assert_eq!(
        code(&pg4d(&["render", "--checkpoint", s(&ckpt), "--camera", "0", "--time", "1.5", "--out", s(&png)], None)),
        2
    );
    let nope = dir.path().join("missing.pg4d");
    assert_eq!(
        code(&pg4d(&["render", "--checkpoint", s(&nope), "--camera", "0", "--time", "0", "--out", s(&png)], None)),
        3
    );

    let report = dir.path().join("eval.json");
    let o = pg4d(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&data), "--report", s(&report)], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ev: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(ev["rows"].as_array().unwrap().len(), 15);
    let fit_mean = r1["headline"]["mean_psnr"].as_f64().unwrap();
    assert!((ev["mean"]["psnr_db"].as_f64().unwrap() - fit_mean).abs() < 1e-9);

    let mut bytes = fs::read(&ckpt).unwrap();
    bytes[40] ^= 0x01;
    let broken = dir.path().join("broken.pg4d");
    fs::write(&broken, bytes).unwrap();
    assert_eq!(
        code(&pg4d(&["eval", "--checkpoint", s(&broken), "--dataset", s(&data), "--report", s(&report)], None)),
        2
    );
}

#[test]
fn fit_config_errors() {
    let (dir, data) = dataset();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"stage1_iters": 0}"#).unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&pg4d(&["fit", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&out)], None)), 2);
    fs::write(&cfg, r#"{"lerning_rate": 1}"#).unwrap();
    assert_eq!(code(&pg4d(&["fit", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&out)], None)), 2);
    assert_eq!(code(&pg4d(&["fit", "--config", s(&small_config(dir.path())), "--out", s(&out)], None)), 2);
    let missing = dir.path().join("nothing");
    assert_eq!(code(&pg4d(&["fit", "--dataset", s(&missing), "--out", s(&out)], None)), 3);
}

#[test]
fn fit_reports_divergence() {
    let (dir, data) = dataset();
    let cfg = dir.path().join("wild.json");
    fs::write(
        &cfg,
        r#"{"stage1_iters": 80, "stage2_iters": 80, "update_interval": 10, "lr": 1e300, "grid_lr_scale": 1e300}"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = pg4d(&["fit", "--dataset", s(&data), "--config", s(&cfg), "--out", s(&out)], None);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["status"], "diverged");
}

#[test]
fn ablate_writes_table() {
    let (dir, data) = dataset();
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    fs::rename(&data, suite.join("tiny")).unwrap();
    let out = dir.path().join("abl");
    let o = pg4d(
        &["ablate", "--suite", s(&suite), "--out", s(&out), "--config", s(&small_config(dir.path()))],
        None,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["config_hash"], rows[1]["config_hash"]);
    assert_eq!(rows[0]["stage1_psnr"], rows[1]["stage1_psnr"]);
    assert!(fs::read_to_string(out.join("ablation.txt")).unwrap().contains("simultaneous"));
}
