//! Timestep partition T₀ (aligned) / T₁ (aligning) / T₂ (pending) and its update rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestepSchedule {
    pub t0: BTreeSet<usize>,
    pub t1: BTreeSet<usize>,
    pub t2: BTreeSet<usize>,
    /// Timesteps promoted from T₂ into T₁ per update.
    pub window: usize,
    /// Iterations between updates.
    pub update_interval: usize,
}

impl TimestepSchedule {
    /// T₀ = {initial}, T₁ = the `window` timesteps nearest to it, T₂ = the rest.
    pub fn progressive(
        timesteps: usize,
        initial: usize,
        window: usize,
        update_interval: usize,
    ) -> Result<Self> {
        if timesteps == 0 || initial >= timesteps {
            return Err(Error::InvalidInput(format!(
                "initial timestep {initial} not in 0..{timesteps}"
            )));
        }
        if window == 0 || update_interval == 0 {
            return Err(Error::InvalidInput(
                "window and update_interval must be positive".into(),
            ));
        }
        let t0: BTreeSet<usize> = [initial].into();
        let rest: BTreeSet<usize> = (0..timesteps).filter(|&t| t != initial).collect();
        let t1 = nearest(&rest, &t0, window);
        let t2 = rest.difference(&t1).copied().collect();
        Ok(TimestepSchedule {
            t0,
            t1,
            t2,
            window,
            update_interval,
        })
    }

    pub fn from_sets(
        t0: BTreeSet<usize>,
        t1: BTreeSet<usize>,
        t2: BTreeSet<usize>,
        window: usize,
        update_interval: usize,
    ) -> Result<Self> {
        if window == 0 || update_interval == 0 {
            return Err(Error::InvalidInput(
                "window and update_interval must be positive".into(),
            ));
        }
        let s = TimestepSchedule {
            t0,
            t1,
            t2,
            window,
            update_interval,
        };
        s.check_partition(s.timesteps())?;
        Ok(s)
    }

    pub fn timesteps(&self) -> usize {
        self.t0.len() + self.t1.len() + self.t2.len()
    }

    pub fn is_terminal(&self) -> bool {
        self.t1.is_empty() && self.t2.is_empty()
    }

    /// Pairwise disjoint, union exactly {0, …, total−1}.
    pub fn check_partition(&self, total: usize) -> Result<()> {
        let mut seen = vec![false; total];
        for &t in self.t0.iter().chain(&self.t1).chain(&self.t2) {
            if t >= total || seen[t] {
                return Err(Error::InvalidInput(format!(
                    "timestep {t} repeated or out of range in partition"
                )));
            }
            seen[t] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidInput("partition does not cover all timesteps".into()));
        }
        Ok(())
    }

    /// Moves T₁ into T₀, then the `window` members of T₂ closest to any former
    /// T₁ member into T₁. Returns the timesteps just added to T₀.
    ///
    /// If T₁ is empty, distances are measured to T₀ instead.
    pub fn update(&mut self) -> Vec<usize> {
        if self.is_terminal() {
            return vec![];
        }
        let former: BTreeSet<usize> = std::mem::take(&mut self.t1);
        let promoted: Vec<usize> = former.iter().copied().collect();
        self.t0.extend(former.iter().copied());
        let anchor = if former.is_empty() { &self.t0 } else { &former };
        let next = nearest(&self.t2, anchor, self.window);
        for t in &next {
            self.t2.remove(t);
        }
        self.t1 = next;
        promoted
    }

    /// Number of updates until the schedule is terminal.
    pub fn updates_to_terminal(&self) -> usize {
        let mut s = self.clone();
        let mut n = 0;
        while !s.is_terminal() {
            s.update();
            n += 1;
        }
        n
    }
}

/// The `count` members of `pool` with the smallest distance to `anchors`; ties go to the smaller index.
fn nearest(pool: &BTreeSet<usize>, anchors: &BTreeSet<usize>, count: usize) -> BTreeSet<usize> {
    let mut ranked: Vec<(usize, usize)> = pool
        .iter()
        .map(|&t| {
            let d = anchors.iter().map(|&a| t.abs_diff(a)).min().unwrap_or(usize::MAX);
            (d, t)
        })
        .collect();
    ranked.sort_unstable();
    ranked.into_iter().take(count).map(|(_, t)| t).collect()
}

/// The member of `t0` closest to `t1_elem`; ties go to the smaller index.
pub fn pick_reference(t1_elem: usize, t0: &BTreeSet<usize>) -> Result<usize> {
    t0.iter()
        .copied()
        .min_by_key(|&t| (t.abs_diff(t1_elem), t))
        .ok_or_else(|| Error::InvalidInput("cannot pick a reference from an empty T0".into()))
}

/// Per-splat Δμ recorded when each timestep entered T₀. Entries are never rewritten.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationCache {
    pub entries: BTreeMap<usize, Vec<[f64; 2]>>,
}

impl DeformationCache {
    /// Records `dmu` for `timestep` unless already present.
    pub fn freeze(&mut self, timestep: usize, dmu: Vec<[f64; 2]>) {
        self.entries.entry(timestep).or_insert(dmu);
    }

    pub fn get(&self, timestep: usize) -> Option<&[[f64; 2]]> {
        self.entries.get(&timestep).map(Vec::as_slice)
    }
}

/// Applies [`TimestepSchedule::update`] and freezes the promoted timesteps' current Δμ.
pub fn schedule_update<F>(schedule: &mut TimestepSchedule, cache: &mut DeformationCache, mut current_dmu: F) -> Vec<usize>
where
    F: FnMut(usize) -> Vec<[f64; 2]>,
{
    let promoted = schedule.update();
    for &t in &promoted {
        cache.freeze(t, current_dmu(t));
    }
    promoted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn reference_examples() {
        assert_eq!(pick_reference(3, &set(&[0, 4])).unwrap(), 4);
        assert_eq!(pick_reference(2, &set(&[0, 4])).unwrap(), 0);
        for t in 0..10 {
            assert_eq!(pick_reference(t, &set(&[7])).unwrap(), 7);
        }
        assert!(pick_reference(1, &set(&[])).is_err());
    }

    #[test]
    fn update_examples() {
        let mut s = TimestepSchedule::from_sets(set(&[0]), set(&[1]), set(&[2, 3, 4]), 1, 10).unwrap();
        assert_eq!(s.update(), vec![1]);
        assert_eq!((s.t0.clone(), s.t1.clone(), s.t2.clone()), (set(&[0, 1]), set(&[2]), set(&[3, 4])));

        let mut s = TimestepSchedule::from_sets(set(&[0, 1]), set(&[2]), set(&[]), 1, 10).unwrap();
        s.update();
        assert!(s.is_terminal());
        assert_eq!(s.t0, set(&[0, 1, 2]));
        let before = s.clone();
        assert!(s.update().is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn progressive_init() {
        let s = TimestepSchedule::progressive(6, 0, 2, 5).unwrap();
        assert_eq!(s.t0, set(&[0]));
        assert_eq!(s.t1, set(&[1, 2]));
        assert_eq!(s.t2, set(&[3, 4, 5]));
        // ⌈(T−1−window)/window⌉ + 1
        assert_eq!(s.updates_to_terminal(), 3);
        let s = TimestepSchedule::progressive(30, 0, 1, 5).unwrap();
        assert_eq!(s.updates_to_terminal(), 29);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        let mut s = TimestepSchedule::from_sets(set(&[2]), set(&[3]), set(&[0, 1, 4, 5, 6]), 1, 1).unwrap();
        s.update();
        assert_eq!(s.t1, set(&[4]));
        let mut s = TimestepSchedule::from_sets(set(&[0]), set(&[3]), set(&[1, 2, 4, 5]), 1, 1).unwrap();
        s.update();
        // 2 and 4 are both at distance 1 from 3.
        assert_eq!(s.t1, set(&[2]));
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(TimestepSchedule::from_sets(set(&[0]), set(&[0]), set(&[1]), 1, 1).is_err());
        assert!(TimestepSchedule::from_sets(set(&[0]), set(&[2]), set(&[]), 1, 1).is_err());
        assert!(TimestepSchedule::progressive(3, 3, 1, 1).is_err());
    }

    #[test]
    fn cache_entries_are_frozen() {
        let mut c = DeformationCache::default();
        c.freeze(1, vec![[1.0, 2.0]]);
        c.freeze(1, vec![[9.0, 9.0]]);
        assert_eq!(c.get(1).unwrap(), &[[1.0, 2.0]]);
    }
}
