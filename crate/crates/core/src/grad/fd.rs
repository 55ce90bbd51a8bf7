//! Central finite-difference gradient checker.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdTolerance {
    pub h: f64,
    pub rel: f64,
    pub abs: f64,
    /// Extra attempts at h/4, h/16, ... for coordinates that fail at `h`.
    ///
    /// The rendered loss is only piecewise smooth (hard Mahalanobis cutoff,
    /// L1 kinks, the alignment indicator). A central difference whose stencil
    /// straddles one of those jumps is not an estimate of the derivative.
    pub refinements: u32,
}

impl Default for FdTolerance {
    fn default() -> Self {
        FdTolerance {
            h: 1e-5,
            rel: 1e-4,
            abs: 1e-7,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub step: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub checked: usize,
    pub max_abs_err: f64,
    /// Largest relative error among coordinates whose absolute error exceeds the absolute tolerance.
    pub max_rel_err: f64,
    pub failing: Vec<usize>,
    /// Coordinates that only passed after step refinement.
    pub refined: Vec<usize>,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }

    pub fn merge(reports: &[FdReport]) -> FdReport {
        let mut out = FdReport {
            checked: 0,
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            failing: vec![],
            refined: vec![],
            entries: vec![],
        };
        for r in reports {
            out.checked += r.checked;
            out.max_abs_err = out.max_abs_err.max(r.max_abs_err);
            out.max_rel_err = out.max_rel_err.max(r.max_rel_err);
            out.failing.extend_from_slice(&r.failing);
            out.refined.extend_from_slice(&r.refined);
            out.entries.extend_from_slice(&r.entries);
        }
        out
    }
}

fn compare(analytic: f64, numeric: f64, tol: &FdTolerance) -> (f64, f64, bool) {
    let abs_err = (analytic - numeric).abs();
    let denom = analytic.abs().max(numeric.abs());
    let rel_err = if denom > 0.0 { abs_err / denom } else { 0.0 };
    (abs_err, rel_err, abs_err <= tol.abs || rel_err <= tol.rel)
}

/// Compares `analytic[i]` against (f(p + h eᵢ) − f(p − h eᵢ)) / 2h for every `i` in `indices`.
pub fn finite_diff_check<F>(
    loss_fn: F,
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    tol: FdTolerance,
) -> FdReport
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert_eq!(params.len(), analytic.len());
    let central = |i: usize, h: f64| -> f64 {
        let mut p = params.to_vec();
        p[i] = params[i] + h;
        let fp = loss_fn(&p);
        p[i] = params[i] - h;
        let fm = loss_fn(&p);
        (fp - fm) / (2.0 * h)
    };

    let entries: Vec<(FdEntry, bool)> = indices
        .par_iter()
        .map(|&i| {
            let mut h = tol.h;
            let mut best: Option<(f64, f64, f64, f64)> = None;
            let (mut passed, mut refined) = (false, false);
            for attempt in 0..=tol.refinements {
                let n = central(i, h);
                let (abs_err, rel_err, ok) = compare(analytic[i], n, &tol);
                if ok || best.is_none_or(|b| abs_err < b.1) {
                    best = Some((n, abs_err, rel_err, h));
                }
                if ok {
                    passed = true;
                    refined = attempt > 0;
                    break;
                }
                h *= 0.25;
            }
            let best = best.expect("at least one attempt");
            (
                FdEntry {
                    index: i,
                    analytic: analytic[i],
                    numeric: best.0,
                    abs_err: best.1,
                    rel_err: best.2,
                    step: best.3,
                    passed,
                },
                refined,
            )
        })
        .collect();

    let mut report = FdReport {
        checked: entries.len(),
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        failing: vec![],
        refined: vec![],
        entries: Vec::with_capacity(entries.len()),
    };
    for (e, refined) in entries {
        report.max_abs_err = report.max_abs_err.max(e.abs_err);
        if e.abs_err > tol.abs {
            report.max_rel_err = report.max_rel_err.max(e.rel_err);
        }
        if !e.passed {
            report.failing.push(e.index);
        }
        if refined {
            report.refined.push(e.index);
        }
        report.entries.push(e);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_sq(p: &[f64]) -> f64 {
        p.iter().map(|v| v * v).sum()
    }

    #[test]
    fn quadratic_matches() {
        let p = [1.0, 2.0];
        let tol = FdTolerance {
            rel: 1e-10,
            abs: 1e-10,
            refinements: 0,
            ..Default::default()
        };
        let r = finite_diff_check(sum_sq, &p, &[2.0, 4.0], &[0, 1], tol);
        assert!(r.passed(), "{r:?}");
        assert!(r.max_abs_err <= 1e-10);
    }

    #[test]
    fn corrupted_component_is_flagged() {
        let p = [1.0, 2.0, -0.5];
        let r = finite_diff_check(sum_sq, &p, &[2.0, 8.0, -1.0], &[0, 1, 2], FdTolerance::default());
        assert_eq!(r.failing, vec![1]);
        assert!(r.max_rel_err > 0.4);
    }

    #[test]
    fn refinement_steps_over_a_jump() {
        // f has a unit jump at x = 1e-6 (inside the h = 1e-5 stencil), slope 3 elsewhere.
        let f = |p: &[f64]| 3.0 * p[0] + if p[0] > 1e-6 { 1.0 } else { 0.0 };
        let r = finite_diff_check(f, &[0.0], &[3.0], &[0], FdTolerance::default());
        assert!(r.passed());
        assert_eq!(r.refined, vec![0]);
        let strict = FdTolerance {
            refinements: 0,
            ..Default::default()
        };
        assert!(!finite_diff_check(f, &[0.0], &[3.0], &[0], strict).passed());
    }
}
