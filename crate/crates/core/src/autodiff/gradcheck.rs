use super::{Graph, NodeId};

/// |analytic − numeric| scaled by the larger magnitude, floored so that
/// near-zero pairs compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Verify the backward pass for one leaf against central differences.
///
/// Perturbs each entry of `param` by ±h, recomputes the graph forward, and
/// compares (f(θ+h) − f(θ−h)) / 2h with the analytic adjoint. Returns the
/// max relative error over entries. stop_gradient values stay pinned during
/// recomputation, so the probe differentiates the same function the
/// backward pass does. The graph is restored to its original state.
pub fn grad_check(graph: &mut Graph, loss: NodeId, param: NodeId, h: f64) -> f64 {
    assert!(h > 0.0, "grad_check: step h must be positive");
    let grads = graph.backward(loss);
    let shape = graph.value(param).shape();
    let analytic = grads.dense(param, shape);

    let original = graph.value(param).clone();
    let mut max_err: f64 = 0.0;
    for idx in 0..original.len() {
        let base = original.data()[idx];

        let mut plus = original.clone();
        plus.data_mut()[idx] = base + h;
        graph.set_leaf_value(param, plus);
        graph.recompute();
        let f_plus = graph.value(loss).scalar_value();

        let mut minus = original.clone();
        minus.data_mut()[idx] = base - h;
        graph.set_leaf_value(param, minus);
        graph.recompute();
        let f_minus = graph.value(loss).scalar_value();

        let numeric = (f_plus - f_minus) / (2.0 * h);
        max_err = max_err.max(relative_error(analytic.data()[idx], numeric));
    }
    graph.set_leaf_value(param, original);
    graph.recompute();
    max_err
}

/// Default finite-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;
