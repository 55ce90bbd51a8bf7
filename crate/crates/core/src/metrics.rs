//! Image fidelity metrics and per-timestep aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Image;
use crate::scenegen::FrameSet;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean absolute per-channel difference.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.same_size(b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum();
    Ok(s / a.data.len() as f64)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_size(b)?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.data.len() as f64)
}

/// 10·log10(1/MSE) for unit dynamic range; `f64::INFINITY` when the images are equal.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * m.log10())
}

fn luma(img: &Image) -> Vec<f64> {
    img.data
        .chunks_exact(3)
        .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
        .collect()
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over every full window position ("valid" output).
fn filter_valid(x: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..n).map(|i| k[i] * x[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Windowed SSIM on luma: 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, unit dynamic range, averaged over all full window positions.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_size(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let (x, y) = (luma(a), luma(b));
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, w, h, &k);
    let my = filter_valid(&y, w, h, &k);
    let mxx = filter_valid(&prod(&x, &x), w, h, &k);
    let myy = filter_valid(&prod(&y, &y), w, h, &k);
    let mxy = filter_valid(&prod(&x, &y), w, h, &k);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2))
            / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub camera: usize,
    pub timestep: usize,
    pub l1: f64,
    /// `None` stands for +∞ (identical images).
    #[serde(with = "psnr_serde")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub l1: f64,
    #[serde(with = "psnr_serde")]
    pub psnr_db: f64,
    pub ssim: f64,
}

impl Aggregate {
    fn of<'a>(rows: impl Iterator<Item = &'a MetricRow>) -> Aggregate {
        let (mut n, mut l, mut p, mut s) = (0usize, 0.0, 0.0, 0.0);
        for r in rows {
            n += 1;
            l += r.l1;
            p += r.psnr_db;
            s += r.ssim;
        }
        let n = n.max(1) as f64;
        Aggregate {
            l1: l / n,
            psnr_db: p / n,
            ssim: s / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub mean: Aggregate,
    /// Means over each timestep, across cameras.
    pub per_timestep: Vec<Aggregate>,
    /// Means over the four consecutive timestep quartiles.
    pub quartiles: Vec<Aggregate>,
    /// Mean over the last ⌈T/4⌉ timesteps.
    pub last_quartile: Aggregate,
    /// Always absent: no learned perceptual metric is computed.
    pub lpips: Option<f64>,
}

/// Timesteps in quartile `q` (0..4) of `t` timesteps; the last quartile is the last ⌈t/4⌉.
pub fn quartile_range(t: usize, q: usize) -> std::ops::Range<usize> {
    let last = t.div_ceil(4);
    let head = t - last;
    match q {
        0..=2 => (head * q / 3)..(head * (q + 1) / 3),
        _ => head..t,
    }
}

impl MetricReport {
    pub fn from_rows(mut rows: Vec<MetricRow>, timesteps: usize) -> MetricReport {
        rows.sort_by_key(|r| (r.camera, r.timestep));
        let per_timestep = (0..timesteps)
            .map(|t| Aggregate::of(rows.iter().filter(|r| r.timestep == t)))
            .collect();
        let quartiles = (0..4)
            .map(|q| {
                let range = quartile_range(timesteps, q);
                Aggregate::of(rows.iter().filter(|r| range.contains(&r.timestep)))
            })
            .collect::<Vec<_>>();
        MetricReport {
            mean: Aggregate::of(rows.iter()),
            per_timestep,
            last_quartile: quartiles[3],
            quartiles,
            rows,
            lpips: None,
        }
    }
}

/// Renders every (camera, timestep) with `render_fn` and scores it against the frames.
pub fn evaluate<F>(render_fn: F, frames: &FrameSet) -> Result<MetricReport>
where
    F: Fn(usize, usize) -> Result<Image> + Sync,
{
    frames.validate()?;
    let nt = frames.num_timesteps();
    let jobs: Vec<(usize, usize)> = (0..frames.num_cameras())
        .flat_map(|c| (0..nt).map(move |t| (c, t)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(c, t)| {
            let ctx = |e: Error| Error::InvalidInput(format!("camera {c}, timestep {t}: {e}"));
            let pred = render_fn(c, t).map_err(ctx)?.clamped();
            let gt = frames.image(c, t);
            Ok(MetricRow {
                camera: c,
                timestep: t,
                l1: l1(&pred, gt)?,
                psnr_db: psnr(&pred, gt)?,
                ssim: ssim(&pred, gt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows, nt))
}

/// Serializes +∞ PSNR as `null`.
mod psnr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
