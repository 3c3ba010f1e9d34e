//! Property suite for descriptor-masked probability refinement.

use proptest::prelude::*;
use rand::Rng;
use sceneenc::autodiff::{Array, Graph};
use sceneenc::descriptor::refine_probabilities;
use sceneenc::seeding;

fn refine(probs: &Array, desc: &Array) -> Array {
    let mut g = Graph::new();
    let p = g.input(probs.clone());
    let d = g.input(desc.clone());
    let r = refine_probabilities(&mut g, p, d);
    g.value(r).clone()
}

fn random_row_stochastic(rows: usize, cols: usize, rng: &mut impl Rng) -> Array {
    let mut a = Array::zeros(rows, cols);
    for i in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (j, v) in raw.iter().enumerate() {
            a.set(i, j, v / total);
        }
    }
    a
}

#[test]
fn randomized_invariants_hold() {
    let mut rng = seeding::rng_from(0xE11);
    for trial in 0..1500 {
        let rows = rng.gen_range(1..=12);
        let cols = rng.gen_range(2..=10);
        let probs = random_row_stochastic(rows, cols, &mut rng);

        // continuous descriptor: rows renormalize and scale cancels
        let desc = Array::random_uniform(1, cols, 0.05, 1.0, &mut rng);
        let refined = refine(&probs, &desc);
        for i in 0..rows {
            let s: f64 = refined.row_slice(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-9, "trial {trial} row {i} sums to {s}");
        }
        let c = rng.gen_range(0.1..10.0);
        let scaled = refine(&probs, &desc.map(|v| c * v));
        for (a, b) in refined.data().iter().zip(scaled.data()) {
            assert!((a - b).abs() <= 1e-12, "trial {trial}: scale {c} changed refinement");
        }

        // binary descriptor with at least one surviving class
        let mut mask = Array::zeros(1, cols);
        let survivors: Vec<usize> =
            (0..cols).filter(|_| rng.gen_bool(0.5)).collect();
        let survivors = if survivors.is_empty() { vec![rng.gen_range(0..cols)] } else { survivors };
        for &j in &survivors {
            mask.set(0, j, 1.0);
        }
        let masked = refine(&probs, &mask);
        for i in 0..rows {
            // zero-masking is exact
            for j in 0..cols {
                if mask.get(0, j) == 0.0 {
                    assert_eq!(masked.get(i, j), 0.0, "trial {trial}: survivor leak at ({i},{j})");
                }
            }
            // argmax over survivors is preserved
            let arg_original = survivors
                .iter()
                .copied()
                .max_by(|&a, &b| probs.get(i, a).partial_cmp(&probs.get(i, b)).unwrap())
                .unwrap();
            let arg_masked = masked.row_argmax()[i];
            assert_eq!(
                probs.get(i, arg_original),
                probs.get(i, arg_masked),
                "trial {trial}: masked argmax moved off the surviving max"
            );
            let s: f64 = masked.row_slice(i).iter().sum();
            assert!((s - 1.0).abs() <= 1e-9);
        }

        // idempotence for binary masks
        let twice = refine(&masked, &mask);
        for (a, b) in twice.data().iter().zip(masked.data()) {
            assert!((a - b).abs() <= 1e-12, "trial {trial}: refinement not idempotent");
        }
    }
}

#[test]
fn uniform_descriptor_is_identity() {
    let mut rng = seeding::rng_from(0xE12);
    for _ in 0..200 {
        let probs = random_row_stochastic(6, 5, &mut rng);
        let c = rng.gen_range(0.05..5.0);
        let out = refine(&probs, &Array::filled(1, 5, c));
        assert!(out.max_abs_diff(&probs) <= 1e-12);
    }
}

#[test]
fn fully_suppressed_rows_stay_finite() {
    // all-zero descriptor drives the denominator to the clamp floor
    let probs = Array::row(vec![0.5, 0.3, 0.2]);
    let out = refine(&probs, &Array::zeros(1, 3));
    assert!(out.all_finite());
    assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Masking then renormalizing equals direct evaluation of the closed form.
    #[test]
    fn matches_closed_form(
        raw in prop::collection::vec(0.01f64..1.0, 4),
        desc in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let total: f64 = raw.iter().sum();
        let probs = Array::row(raw.iter().map(|v| v / total).collect());
        let descriptor = Array::row(desc.clone());
        let out = refine(&probs, &descriptor);
        let denom: f64 = (0..4).map(|j| desc[j] * probs.get(0, j)).sum();
        prop_assume!(denom > 1e-9);
        for j in 0..4 {
            let expected = desc[j] * probs.get(0, j) / denom;
            prop_assert!((out.get(0, j) - expected).abs() <= 1e-9);
        }
    }
}
