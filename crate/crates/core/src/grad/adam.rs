//! Adam with bias correction and an optional per-coordinate rate multiplier.

use crate::error::{first_non_finite, Error, Result};
use crate::splat::{SPLAT_PARAMS, S_MIN};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const DEFAULT_LR: f64 = 1.6e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    /// Multiplies `lr` per coordinate when present.
    pub lr_scale: Option<Vec<f64>>,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr_scale: None,
        }
    }

    pub fn with_lr_scale(mut self, scale: Vec<f64>) -> Self {
        assert_eq!(scale.len(), self.m.len());
        self.lr_scale = Some(scale);
        self
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One bias-corrected update. Rejects non-finite gradients before touching any state.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidInput(format!(
                "adam layout mismatch: state {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = first_non_finite(grads) {
            return Err(Error::NonFinite {
                index,
                context: "gradient passed to adam".into(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            let lr = match &self.lr_scale {
                Some(s) => self.lr * s[i],
                None => self.lr,
            };
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Clamps a flat block of splat parameters back onto the valid set.
pub fn project_splat_params(params: &mut [f64]) {
    for p in params.chunks_exact_mut(SPLAT_PARAMS) {
        p[2] = p[2].max(S_MIN);
        p[3] = p[3].max(S_MIN);
        p[5] = p[5].clamp(0.0, 1.0);
        for c in &mut p[6..9] {
            *c = c.clamp(0.0, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_closed_form() {
        let mut st = AdamState::new(3, 0.01);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[1.0, 1.0, 1.0]).unwrap();
        let delta = 0.01 / (1.0 + 1e-8);
        assert!((p[0] - (1.0 - delta)).abs() < 1e-15);
        assert!((p[1] - (-2.0 - delta)).abs() < 1e-15);
        assert!((p[2] - (0.5 - delta)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut st = AdamState::new(2, 0.1);
        let mut p = vec![0.3, 0.7];
        for _ in 0..5 {
            st.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.3, 0.7]);
    }

    /// Textbook scalar Adam, written independently of `AdamState`.
    fn reference_adam_on_square(p0: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (mut p, mut m, mut v) = (p0, 0.0f64, 0.0f64);
        let mut out = Vec::with_capacity(steps);
        for t in 1..=steps {
            let g = 2.0 * p;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32));
            let vh = v / (1.0 - 0.999f64.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + 1e-8);
            out.push(p);
        }
        out
    }

    #[test]
    fn minimizes_square_like_reference() {
        let reference = reference_adam_on_square(1.0, 0.1, 200);
        let mut st = AdamState::new(1, 0.1);
        let mut p = vec![1.0];
        let mut reached = None;
        for (k, want) in reference.iter().enumerate() {
            let g = [2.0 * p[0]];
            st.step(&mut p, &g).unwrap();
            assert!((p[0] - want).abs() < 1e-12);
            if reached.is_none() && p[0].abs() < 0.05 {
                reached = Some(k + 1);
            }
        }
        assert!(reached.is_some(), "never reached |p| < 0.05");
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let mut st = AdamState::new(3, 0.1);
        let mut p = vec![0.0; 3];
        let err = st.step(&mut p, &[0.0, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert_eq!(st.step, 0);
        assert_eq!(p, vec![0.0; 3]);
    }

    #[test]
    fn projection_restores_splat_invariants() {
        let mut p = vec![0.0, 0.0, -1.0, 0.5, 9.0, 1.2, -0.1, 0.4, 3.0];
        project_splat_params(&mut p);
        assert_eq!(p, vec![0.0, 0.0, S_MIN, 0.5, 9.0, 1.0, 0.0, 0.4, 1.0]);
    }

    #[test]
    fn rate_multiplier_scales_step() {
        let mut st = AdamState::new(2, 0.01).with_lr_scale(vec![1.0, 10.0]);
        let mut p = vec![0.0, 0.0];
        st.step(&mut p, &[1.0, 1.0]).unwrap();
        assert!((p[1] / p[0] - 10.0).abs() < 1e-12);
    }
}
