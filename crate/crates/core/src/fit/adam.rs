//! First/second-moment adaptive optimizer with bias correction.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { first: vec![0.0; len], second: vec![0.0; len], steps: 0 }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }
}

/// One update of `params` in place. Nothing is modified when the shapes
/// disagree or any gradient is non-finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::DimensionMismatch { context: "adam step", expected: params.len(), actual: grads.len() });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive and finite, got {lr}")));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {i} is {}", grads[i])));
    }
    state.steps += 1;
    let t = state.steps as f64;
    let c1 = 1.0 - libm::pow(BETA1, t);
    let c2 = 1.0 - libm::pow(BETA2, t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.first).zip(&mut state.second) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (libm::sqrt(v_hat) + EPSILON);
    }
    Ok(())
}

/// Soft-thresholds `params` toward zero by `lr * weight` in the diagonal
/// metric of the last [`adam_step`]: the proximal map of `weight * |x|_1`
/// under the same preconditioner. Entries with no gradient history drop
/// to exactly zero.
pub fn adam_prox_l1(params: &mut [f64], state: &AdamState, lr: f64, weight: f64) -> Result<()> {
    if params.len() != state.len() {
        return Err(Error::DimensionMismatch { context: "adam prox", expected: state.len(), actual: params.len() });
    }
    if state.steps == 0 {
        return Ok(());
    }
    let c2 = 1.0 - libm::pow(BETA2, state.steps as f64);
    for (p, v) in params.iter_mut().zip(&state.second) {
        let threshold = lr * weight / (libm::sqrt(v / c2) + EPSILON);
        *p = if *p > threshold {
            *p - threshold
        } else if *p < -threshold {
            *p + threshold
        } else {
            0.0
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        s.first = vec![0.5, 0.5];
        s.second = vec![0.25, 0.25];
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(s.first, vec![0.45, 0.45]);
        assert_eq!(s.second, vec![0.25 * 0.999, 0.25 * 0.999]);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut p = vec![0.0];
        let mut s = AdamState::new(1);
        for _ in 0..2000 {
            let before = p[0];
            adam_step(&mut p, &[3.0], &mut s, 0.01).unwrap();
            assert!((before - p[0] - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn three_step_trace_matches_reference() {
        // Hand-rolled reference: m_t, v_t, bias-corrected ratios.
        let grads = [1.0, -2.0, 0.5];
        let lr = 0.1;
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= lr * mh / (vh.sqrt() + 1e-15);
            expected.push(x);
        }
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        for (g, e) in grads.iter().zip(&expected) {
            adam_step(&mut p, &[*g], &mut s, lr).unwrap();
            assert!((p[0] - e).abs() < 1e-14, "{} vs {e}", p[0]);
        }
        // First step is exactly -lr * sign(g).
        assert!((expected[0] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut p = vec![1.0, 2.0];
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut s, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(s, AdamState::new(2));
        assert!(adam_step(&mut p, &[0.1], &mut s, 0.1).is_err());
    }

    #[test]
    fn prox_soft_thresholds_in_adam_metric() {
        let mut s = AdamState::new(3);
        s.steps = 1;
        // Bias-corrected second moments 1, 4 and 0.
        s.second = vec![0.001, 0.004, 0.0];
        let mut p = vec![0.5, -0.05, 1e-3];
        adam_prox_l1(&mut p, &s, 0.1, 1.0).unwrap();
        assert!((p[0] - 0.4).abs() < 1e-12);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], 0.0);
        let mut fresh = vec![0.3];
        adam_prox_l1(&mut fresh, &AdamState::new(1), 0.1, 1.0).unwrap();
        assert_eq!(fresh, vec![0.3]);
        assert!(adam_prox_l1(&mut [0.0; 2], &s, 0.1, 1.0).is_err());
    }
}
