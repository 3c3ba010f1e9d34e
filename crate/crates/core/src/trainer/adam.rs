use serde::{Deserialize, Serialize};

use crate::autodiff::Array;
use crate::backbone::ModelParams;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates, aligned with `ModelParams::named()` order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array>,
    pub v: Vec<Array>,
    pub step: u64,
}

impl AdamState {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let zeros: Vec<Array> = params
            .named()
            .iter()
            .map(|(_, a)| Array::zeros(a.shape()[0], a.shape()[1]))
            .collect();
        AdamState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One Adam update for a single parameter array with bias correction:
/// m ← β₁m + (1−β₁)g, v ← β₂v + (1−β₂)g², θ ← θ − lr·m̂/(√v̂ + ε).
pub fn adam_step(
    param: &mut Array,
    grad: &Array,
    m: &mut Array,
    v: &mut Array,
    step: u64,
    hp: &AdamHyper,
) {
    assert_eq!(param.shape(), grad.shape(), "adam_step: parameter/gradient shape mismatch");
    assert!(step >= 1, "adam_step: step counter is 1-based");
    let bc1 = 1.0 - hp.beta1.powi(step as i32);
    let bc2 = 1.0 - hp.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad.data()[i];
        let mi = hp.beta1 * m.data()[i] + (1.0 - hp.beta1) * g;
        let vi = hp.beta2 * v.data()[i] + (1.0 - hp.beta2) * g * g;
        m.data_mut()[i] = mi;
        v.data_mut()[i] = vi;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        param.data_mut()[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.eps);
    }
}

/// Update every parameter from gradients in `named()` order.
pub fn apply_updates(
    params: &mut ModelParams,
    grads: &[Array],
    state: &mut AdamState,
    hp: &AdamHyper,
) {
    state.step += 1;
    let step = state.step;
    let named = params.named_mut();
    assert_eq!(named.len(), grads.len(), "gradient list out of sync with parameters");
    for (i, (_, param)) in named.into_iter().enumerate() {
        adam_step(param, &grads[i], &mut state.m[i], &mut state.v[i], step, hp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(lr: f64) -> AdamHyper {
        AdamHyper { learning_rate: lr, ..AdamHyper::default() }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Array::row(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let g = Array::zeros(1, 3);
        let mut m = Array::zeros(1, 3);
        let mut v = Array::zeros(1, 3);
        adam_step(&mut p, &g, &mut m, &mut v, 1, &hp(0.1));
        assert_eq!(p.data(), before.data());
    }

    #[test]
    fn unit_gradient_first_step_moves_by_lr() {
        // bias correction makes m̂ = v̂ = 1 at step 1, so Δ = −lr/(1 + ε)
        let mut p = Array::scalar(0.0);
        let g = Array::scalar(1.0);
        let mut m = Array::scalar(0.0);
        let mut v = Array::scalar(0.0);
        adam_step(&mut p, &g, &mut m, &mut v, 1, &hp(0.1));
        assert!((p.scalar_value() + 0.1).abs() < 1e-9, "got {}", p.scalar_value());
    }

    #[test]
    fn negated_gradient_negates_the_first_update() {
        let run = |sign: f64| {
            let mut p = Array::row(vec![0.5, -0.5]);
            let g = Array::row(vec![sign * 0.3, sign * -1.7]);
            let mut m = Array::zeros(1, 2);
            let mut v = Array::zeros(1, 2);
            adam_step(&mut p, &g, &mut m, &mut v, 1, &hp(0.05));
            (p.get(0, 0) - 0.5, p.get(0, 1) + 0.5)
        };
        let (a1, b1) = run(1.0);
        let (a2, b2) = run(-1.0);
        assert!((a1 + a2).abs() < 1e-12);
        assert!((b1 + b2).abs() < 1e-12);
    }
}
