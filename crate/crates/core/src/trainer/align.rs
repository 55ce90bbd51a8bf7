//! Adaptive timestep alignment loss.
//!
//! For each aligning timestep t₁ and its nearest aligned timestep t₀:
//!
//! ```text
//! w = w0 / (|t₁ − t₀| + 1) · sigmoid(‖Δμ_t₁ − Δμ_t₀‖)
//! L = w · 𝕀(‖Δμ_t₁ − Δμ_t₀‖ > τ) · ‖Δμ_t₁ − Δμ_t₀‖
//! ```
//!
//! evaluated per splat, averaged over splats and summed over T₁. The weight
//! and the cached Δμ_t₀ are constants for differentiation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::schedule::{pick_reference, DeformationCache, TimestepSchedule};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub w0: f64,
    /// Motion-mask threshold in world units.
    pub tau: f64,
    pub lambda_l1: f64,
    pub lambda_tv: f64,
    pub lambda_align: f64,
}

impl AlignConfig {
    /// Defaults with τ set to 5% of the scene diagonal.
    pub fn for_diagonal(diagonal: f64) -> Self {
        AlignConfig {
            w0: 1.0,
            tau: 0.05 * diagonal,
            lambda_l1: 1.0,
            lambda_tv: 1.0,
            lambda_align: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w0 > 0.0
            && self.tau >= 0.0
            && self.lambda_l1 >= 0.0
            && self.lambda_tv >= 0.0
            && self.lambda_align >= 0.0
            && [self.w0, self.tau, self.lambda_l1, self.lambda_tv, self.lambda_align]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::InvalidInput(format!("invalid alignment config {self:?}")));
        }
        Ok(())
    }
}

fn norm2(d: [f64; 2]) -> f64 {
    d[0].hypot(d[1])
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-splat weight from the Δμ difference and the timestep distance.
pub fn alignment_weight(dmu_t1: [f64; 2], dmu_t0: [f64; 2], d_t: f64, w0: f64) -> f64 {
    let n = norm2([dmu_t1[0] - dmu_t0[0], dmu_t1[1] - dmu_t0[1]]);
    w0 / (d_t + 1.0) * sigmoid(n)
}

/// Per-splat weights for every T₁ timestep at the given Δμ.
pub fn alignment_weights(
    current: &BTreeMap<usize, Vec<[f64; 2]>>,
    schedule: &TimestepSchedule,
    cache: &DeformationCache,
    cfg: &AlignConfig,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for &t1 in &schedule.t1 {
        let (t0, anchor, dmu) = lookup(current, schedule, cache, t1)?;
        let d_t = t1.abs_diff(t0) as f64;
        let w = dmu
            .iter()
            .zip(anchor)
            .map(|(a, b)| alignment_weight(*a, *b, d_t, cfg.w0))
            .collect();
        out.insert(t1, w);
    }
    Ok(out)
}

type Lookup<'a> = (usize, &'a [[f64; 2]], &'a [[f64; 2]]);

fn lookup<'a>(
    current: &'a BTreeMap<usize, Vec<[f64; 2]>>,
    schedule: &TimestepSchedule,
    cache: &'a DeformationCache,
    t1: usize,
) -> Result<Lookup<'a>> {
    let t0 = pick_reference(t1, &schedule.t0)?;
    let anchor = cache.get(t0).ok_or_else(|| {
        Error::InvalidInput(format!("no cached deformation for aligned timestep {t0}"))
    })?;
    let dmu = current.get(&t1).ok_or_else(|| {
        Error::InvalidInput(format!("no current deformation for timestep {t1}"))
    })?;
    if dmu.len() != anchor.len() || dmu.is_empty() {
        return Err(Error::InvalidInput("splat count mismatch in alignment".into()));
    }
    Ok((t0, anchor, dmu))
}

/// Loss and dL/dΔμ_t₁ for every T₁ timestep, given the current Δμ per splat at each.
pub fn alignment_loss(
    current: &BTreeMap<usize, Vec<[f64; 2]>>,
    schedule: &TimestepSchedule,
    cache: &DeformationCache,
    cfg: &AlignConfig,
) -> Result<(f64, BTreeMap<usize, Vec<[f64; 2]>>)> {
    alignment_loss_weighted(current, schedule, cache, cfg, None)
}

/// As [`alignment_loss`], but with the weights taken from `frozen` when given.
pub fn alignment_loss_weighted(
    current: &BTreeMap<usize, Vec<[f64; 2]>>,
    schedule: &TimestepSchedule,
    cache: &DeformationCache,
    cfg: &AlignConfig,
    frozen: Option<&BTreeMap<usize, Vec<f64>>>,
) -> Result<(f64, BTreeMap<usize, Vec<[f64; 2]>>)> {
    let mut total = 0.0;
    let mut grads = BTreeMap::new();
    for &t1 in &schedule.t1 {
        let (t0, anchor, dmu) = lookup(current, schedule, cache, t1)?;
        let fixed = match frozen {
            Some(f) => Some(f.get(&t1).filter(|w| w.len() == dmu.len()).ok_or_else(|| {
                Error::InvalidInput(format!("no frozen weights for timestep {t1}"))
            })?),
            None => None,
        };
        let d_t = t1.abs_diff(t0) as f64;
        let inv_n = 1.0 / dmu.len() as f64;
        let mut sum = 0.0;
        let mut g = vec![[0.0; 2]; dmu.len()];
        for (i, (a, b)) in dmu.iter().zip(anchor).enumerate() {
            let diff = [a[0] - b[0], a[1] - b[1]];
            let n = norm2(diff);
            if n > cfg.tau {
                let w = match fixed {
                    Some(f) => f[i],
                    None => cfg.w0 / (d_t + 1.0) * sigmoid(n),
                };
                sum += w * n;
                g[i] = [w * diff[0] / n * inv_n, w * diff[1] / n * inv_n];
            }
        }
        total += sum * inv_n;
        grads.insert(t1, g);
    }
    Ok((total, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn weight_examples() {
        assert!((alignment_weight([0.0, 0.0], [0.0, 0.0], 1.0, 1.0) - 0.25).abs() < 1e-15);
        // sigmoid(ln 3) = 3/4
        let l3 = 3.0f64.ln();
        assert!((alignment_weight([l3, 0.0], [0.0, 0.0], 1.0, 1.0) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn weight_bounds() {
        for &n in &[1e-6, 0.1, 1.0, 5.0, 30.0] {
            for &dt in &[0.0, 1.0, 4.0] {
                let w = alignment_weight([n, 0.0], [0.0, 0.0], dt, 2.0);
                assert!(w > 2.0 / (2.0 * (dt + 1.0)) && w < 2.0 / (dt + 1.0));
            }
        }
    }

    fn single(norm: f64, tau: f64) -> f64 {
        let schedule = TimestepSchedule::from_sets(
            BTreeSet::from([0]),
            BTreeSet::from([1]),
            BTreeSet::new(),
            1,
            1,
        )
        .unwrap();
        let mut cache = DeformationCache::default();
        cache.freeze(0, vec![[0.0, 0.0]]);
        let current = BTreeMap::from([(1, vec![[0.0, norm]])]);
        let cfg = AlignConfig {
            w0: 1.0,
            tau,
            lambda_l1: 1.0,
            lambda_tv: 1.0,
            lambda_align: 1.0,
        };
        alignment_loss(&current, &schedule, &cache, &cfg).unwrap().0
    }

    #[test]
    fn loss_examples() {
        let l3 = 3.0f64.ln();
        let v = single(l3, 0.5);
        assert!((v - 0.375 * l3).abs() < 1e-12, "{v}");
        assert!((v - 0.411_979_608_3).abs() < 1e-9);
        assert_eq!(single(0.4, 0.5), 0.0);
        // Strict inequality at the threshold.
        assert_eq!(single(0.5, 0.5), 0.0);
    }

    /// Straight-line restatement: scan T₀ for the nearest member, then sum per splat.
    fn brute_force(
        current: &BTreeMap<usize, Vec<[f64; 2]>>,
        t0: &[usize],
        t1: &[usize],
        cache: &BTreeMap<usize, Vec<[f64; 2]>>,
        w0: f64,
        tau: f64,
    ) -> f64 {
        let mut total = 0.0;
        for &a in t1 {
            let mut best = t0[0];
            for &b in t0 {
                let (db, dbest) = ((a as i64 - b as i64).abs(), (a as i64 - best as i64).abs());
                if db < dbest || (db == dbest && b < best) {
                    best = b;
                }
            }
            let dt = (a as f64 - best as f64).abs();
            let cur = &current[&a];
            let anc = &cache[&best];
            let mut s = 0.0;
            for k in 0..cur.len() {
                let dx = cur[k][0] - anc[k][0];
                let dy = cur[k][1] - anc[k][1];
                let n = (dx * dx + dy * dy).sqrt();
                if n > tau {
                    s += w0 / (dt + 1.0) / (1.0 + (-n).exp()) * n;
                }
            }
            total += s / cur.len() as f64;
        }
        total
    }

    proptest::proptest! {
        #[test]
        fn matches_brute_force(
            seed in 0u64..10_000,
            nt in 3usize..12,
            splats in 1usize..9,
            w0 in 0.1f64..3.0,
            tau in 0.0f64..0.6,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t0 = BTreeSet::new();
            let mut t1 = BTreeSet::new();
            let mut t2 = BTreeSet::new();
            t0.insert(rng.random_range(0..nt));
            for t in 0..nt {
                if t0.contains(&t) {
                    continue;
                }
                match rng.random_range(0..3) {
                    0 => t0.insert(t),
                    1 => t1.insert(t),
                    _ => t2.insert(t),
                };
            }
            let schedule = TimestepSchedule::from_sets(t0.clone(), t1.clone(), t2, 1, 1).unwrap();
            let vec2 = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<[f64; 2]> {
                (0..splats).map(|_| [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)]).collect()
            };
            let mut cache = DeformationCache::default();
            let mut raw_cache = BTreeMap::new();
            for &t in &t0 {
                let v = vec2(&mut rng);
                cache.freeze(t, v.clone());
                raw_cache.insert(t, v);
            }
            let current: BTreeMap<usize, Vec<[f64; 2]>> = t1.iter().map(|&t| (t, vec2(&mut rng))).collect();
            let cfg = AlignConfig { w0, tau, lambda_l1: 1.0, lambda_tv: 1.0, lambda_align: 1.0 };
            let (got, _) = alignment_loss(&current, &schedule, &cache, &cfg).unwrap();
            let t0v: Vec<usize> = t0.into_iter().collect();
            let t1v: Vec<usize> = t1.into_iter().collect();
            let want = brute_force(&current, &t0v, &t1v, &raw_cache, w0, tau);
            proptest::prop_assert!((got - want).abs() <= 1e-12, "{} vs {}", got, want);
        }
    }
}
