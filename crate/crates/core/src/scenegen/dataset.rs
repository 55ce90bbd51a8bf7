//! Multi-camera, multi-timestep frame sets and their directory layout.
//!
//! ```text
//! dataset/
//!   spec.json       SceneSpec echo
//!   cameras.json    [{center, rotation, zoom, width, height}, ...]
//!   times.json      normalized timestamps
//!   gt_scene.json   ground-truth splats at t = 0
//!   cam_<k>/frame_<t:05>.png
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Serialize};

use super::spec::SceneSpec;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::splat::{Scene, Splat};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub cameras: Vec<Camera>,
    pub times: Vec<f64>,
    /// `images[camera][timestep]`
    pub images: Vec<Vec<Image>>,
}

impl FrameSet {
    pub fn num_cameras(&self) -> usize {
        self.cameras.len()
    }

    pub fn num_timesteps(&self) -> usize {
        self.times.len()
    }

    pub fn image(&self, camera: usize, timestep: usize) -> &Image {
        &self.images[camera][timestep]
    }

    /// Complete camera × timestep grid, matching sizes, strictly increasing times in [0,1].
    pub fn validate(&self) -> Result<()> {
        let bad = |r: String| Err(Error::InvalidInput(r));
        if self.cameras.is_empty() || self.times.is_empty() {
            return bad("frame set has no cameras or no timesteps".into());
        }
        if self.images.len() != self.cameras.len() {
            return bad(format!(
                "{} image rows for {} cameras",
                self.images.len(),
                self.cameras.len()
            ));
        }
        for (k, t) in self.times.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return bad(format!("time {t} outside [0,1]"));
            }
            if k > 0 && *t <= self.times[k - 1] {
                return bad("times must be strictly increasing".into());
            }
        }
        for (c, (cam, row)) in self.cameras.iter().zip(&self.images).enumerate() {
            cam.validate()?;
            if row.len() != self.times.len() {
                return bad(format!("camera {c} has {} of {} frames", row.len(), self.times.len()));
            }
            for (t, img) in row.iter().enumerate() {
                if img.width != cam.width || img.height != cam.height {
                    return bad(format!("frame ({c}, {t}) size differs from its camera"));
                }
            }
        }
        Ok(())
    }

    /// The frames of a single timestep, as a one-timestep set.
    pub fn at_timestep(&self, timestep: usize) -> FrameSet {
        FrameSet {
            cameras: self.cameras.clone(),
            times: vec![self.times[timestep]],
            images: self.images.iter().map(|row| vec![row[timestep].clone()]).collect(),
        }
    }
}

pub fn frame_path(dir: &Path, camera: usize, timestep: usize) -> PathBuf {
    dir.join(format!("cam_{camera}")).join(format!("frame_{timestep:05}.png"))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Writes the full dataset layout; the directory's parent must exist.
pub fn write_dataset(dir: &Path, spec: &SceneSpec, frames: &FrameSet, gt: &Scene) -> Result<()> {
    if !dir.exists() {
        fs::create_dir(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_json(&dir.join("spec.json"), spec)?;
    write_json(&dir.join("cameras.json"), &frames.cameras)?;
    write_json(&dir.join("times.json"), &frames.times)?;
    write_json(&dir.join("gt_scene.json"), &gt.splats)?;
    for c in 0..frames.num_cameras() {
        let cdir = dir.join(format!("cam_{c}"));
        if !cdir.exists() {
            fs::create_dir(&cdir).map_err(|e| Error::io(&cdir, e))?;
        }
    }
    let jobs: Vec<(usize, usize)> = (0..frames.num_cameras())
        .flat_map(|c| (0..frames.num_timesteps()).map(move |t| (c, t)))
        .collect();
    jobs.par_iter()
        .try_for_each(|&(c, t)| frames.image(c, t).save_png(&frame_path(dir, c, t)))
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub spec: SceneSpec,
    pub frames: FrameSet,
    pub gt_splats: Option<Vec<Splat>>,
}

impl LoadedDataset {
    pub fn gt_scene(&self) -> Option<Scene> {
        self.gt_splats
            .as_ref()
            .map(|s| Scene::new(s.clone(), self.spec.background))
    }
}

/// Reads and validates a dataset directory. Errors name the offending file.
pub fn load_dataset(dir: &Path) -> Result<LoadedDataset> {
    let invalid = |path: PathBuf, reason: String| Error::Dataset { path, reason };
    let spec_path = dir.join("spec.json");
    let spec: SceneSpec = read_json(&spec_path)?;
    spec.validate()
        .map_err(|e| invalid(spec_path.clone(), e.to_string()))?;
    let cam_path = dir.join("cameras.json");
    let cameras: Vec<Camera> = read_json(&cam_path)?;
    if cameras.is_empty() {
        return Err(invalid(cam_path, "no cameras".into()));
    }
    for (k, c) in cameras.iter().enumerate() {
        c.validate()
            .map_err(|e| invalid(cam_path.clone(), format!("camera {k}: {e}")))?;
    }
    let times_path = dir.join("times.json");
    let times: Vec<f64> = read_json(&times_path)?;
    let gt_path = dir.join("gt_scene.json");
    let gt_splats = if gt_path.exists() {
        Some(read_json::<Vec<Splat>>(&gt_path)?)
    } else {
        None
    };
    let jobs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..times.len()).map(move |t| (c, t)))
        .collect();
    let loaded: Vec<Image> = jobs
        .par_iter()
        .map(|&(c, t)| Image::load_png(&frame_path(dir, c, t)))
        .collect::<Result<_>>()?;
    let mut it = loaded.into_iter();
    let images = (0..cameras.len())
        .map(|_| (0..times.len()).map(|_| it.next().unwrap()).collect())
        .collect();
    let frames = FrameSet {
        cameras,
        times,
        images,
    };
    frames
        .validate()
        .map_err(|e| invalid(dir.to_path_buf(), e.to_string()))?;
    Ok(LoadedDataset {
        spec,
        frames,
        gt_splats,
    })
}
