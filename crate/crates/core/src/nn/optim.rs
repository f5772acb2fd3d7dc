use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `p <- p - lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("sgd step", params.len(), grads.len()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// Adam moments for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update; advances `state.step` by one.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape("adam step (grads)", params.len(), grads.len()));
    }
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape("adam step (state)", params.len(), state.m.len()));
    }
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sgd_basics() {
        let mut p = [1.0];
        sgd_step(&mut p, &[0.0], 0.1).unwrap();
        assert_eq!(p, [1.0]);
        sgd_step(&mut p, &[1.0], 0.1).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);

        let mut a = [2.0, -1.0];
        let mut b = a;
        let g = [0.3, -0.7];
        sgd_step(&mut a, &g, 0.05).unwrap();
        sgd_step(&mut a, &g, 0.05).unwrap();
        sgd_step(&mut b, &g, 0.1).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(sgd_step(&mut [0.0; 2], &[0.0], 0.1).is_err());
    }

    #[test]
    fn adam_first_step() {
        let mut p = [0.0];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.01).unwrap();
        // m_hat = v_hat = 1 at t = 1.
        assert!((p[0] + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(s.step, 1);

        let mut q = [0.5];
        let mut s = AdamState::new(1);
        adam_step(&mut q, &[0.0], &mut s, 0.01).unwrap();
        assert_eq!(q, [0.5]);
        assert_eq!(s.step, 1);
        assert!(adam_step(&mut q, &[0.0, 1.0], &mut s, 0.01).is_err());
        assert!(adam_step(&mut [0.0; 2], &[0.0; 2], &mut s, 0.01).is_err());
    }

    proptest! {
        #[test]
        fn adam_first_update_bounded_by_lr(g in proptest::collection::vec(-1e3f64..1e3, 1..16), lr in 1e-6f64..1.0) {
            let mut p = vec![0.0; g.len()];
            let mut s = AdamState::new(g.len());
            adam_step(&mut p, &g, &mut s, lr).unwrap();
            for x in p {
                prop_assert!(x.abs() <= lr * (1.0 + 1e-12));
            }
        }
    }
}
