//! Scene descriptor machinery: ground-truth generation, the scene-encoder
//! head, and descriptor-masked probability refinement.
//!
//! A scene descriptor is a length-n row: binary when derived from labels
//! (element j is 1 iff class j occurs in the scene), a per-element existence
//! probability when predicted. Masking multiplies each probability row by
//! the descriptor and renormalizes, which filters out classes the scene
//! cannot contain.

use thiserror::Error;

use crate::autodiff::{Array, Graph, NodeId};
use crate::backbone::{affine, DenseNodes};

/// Predicted descriptors are clamped into [CLAMP, 1−CLAMP] so their log
/// stays finite under the descriptor loss.
pub const DESCRIPTOR_CLAMP: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum DescriptorError {
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("cannot derive a descriptor from an empty label list")]
    EmptyLabels,
}

/// Binary descriptor derived from per-point labels: element j is 1 iff
/// class j occurs.
pub fn ground_truth_descriptor(labels: &[usize], n_classes: usize) -> Result<Array, DescriptorError> {
    if labels.is_empty() {
        return Err(DescriptorError::EmptyLabels);
    }
    let mut desc = Array::zeros(1, n_classes);
    for &label in labels {
        if label >= n_classes {
            return Err(DescriptorError::LabelOutOfRange { label, n_classes });
        }
        desc.set(0, label, 1.0);
    }
    Ok(desc)
}

/// Scene-encoder head: two hidden affine+ReLU layers on the global feature,
/// then affine + sigmoid per element, clamped away from {0, 1}. Each output
/// element is an independent existence probability, which is why the output
/// is a sigmoid rather than a softmax.
pub fn scene_encoder_forward(g: &mut Graph, global_feature: NodeId, head: &[DenseNodes]) -> NodeId {
    assert!(head.len() >= 2, "scene head needs hidden layers plus an output layer");
    let mut h = global_feature;
    for layer in &head[..head.len() - 1] {
        let a = affine(g, h, *layer);
        h = g.relu(a);
    }
    let logits = affine(g, h, head[head.len() - 1]);
    let probs = g.sigmoid(logits);
    g.clamp(probs, DESCRIPTOR_CLAMP, 1.0 - DESCRIPTOR_CLAMP)
}

/// Mask a row-stochastic probability map with a descriptor and renormalize:
/// out(i,j) = d_j·p(i,j) / Σ_k d_k·p(i,k), with the denominator floored so
/// an all-suppressed row stays finite.
pub fn refine_probabilities(g: &mut Graph, probs: NodeId, descriptor: NodeId) -> NodeId {
    let masked = g.mul(probs, descriptor);
    let denom = g.row_sum(masked);
    g.div(masked, denom)
}

/// Hard-threshold a predicted descriptor at τ (debug switch for masking
/// with a strict multi-hot vector).
pub fn binarize(descriptor: &Array, tau: f64) -> Array {
    descriptor.map(|v| if v >= tau { 1.0 } else { 0.0 })
}
