//! Training losses: point-level cross entropy on the refined probabilities,
//! descriptor supervision, and the region similarity loss with its
//! distinguishing-point selection strategies.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, NodeId};
use crate::geometry::{knn_same_label, PointCloud};
use crate::seeding;

/// How the predicted descriptor is penalized against the binary truth.
///
/// `PresentOnly` sums −g·log(g̃) over present classes only; an all-ones
/// prediction also drives it to zero, so it cannot punish hallucinated
/// classes. `FullBce` adds the −(1−g)·log(1−g̃) term and is uniquely
/// minimized at the truth; it is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorLossVariant {
    PresentOnly,
    FullBce,
}

/// How distinguishing points are picked from the correctly classified set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    TopConfidence,
    Random,
}

/// Scalar loss values for one step, plus the weights that combined them.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LossBundle {
    pub cls: f64,
    pub des: f64,
    pub rs: f64,
    pub total: f64,
    pub lambdas: (f64, f64, f64),
    pub selected_indices: Vec<usize>,
}

/// Mean over points of −log p(true class), read off the refined map.
/// The log floor keeps a fully masked true class finite.
pub fn cls_loss(g: &mut Graph, refined: NodeId, labels: &[usize], n_classes: usize) -> NodeId {
    let n = g.value(refined).rows();
    assert_eq!(n, labels.len(), "cls_loss: {n} rows vs {} labels", labels.len());
    let mut onehot = Array::zeros(n, n_classes);
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < n_classes, "cls_loss: label {label} out of range");
        onehot.set(i, label, 1.0);
    }
    let mask = g.input(onehot);
    let picked = g.mul(refined, mask);
    let per_point = g.row_sum(picked);
    let logs = g.log(per_point);
    let mean = g.mean(logs);
    g.scale(mean, -1.0)
}

/// Multi-hot descriptor supervision; see [`DescriptorLossVariant`].
pub fn descriptor_loss(
    g: &mut Graph,
    predicted: NodeId,
    truth: &Array,
    variant: DescriptorLossVariant,
) -> NodeId {
    let shape = g.value(predicted).shape();
    assert_eq!(shape, truth.shape(), "descriptor_loss: {shape:?} vs {:?}", truth.shape());
    let truth_node = g.input(truth.clone());
    let log_pred = g.log(predicted);
    let present = g.mul(truth_node, log_pred);
    let mut total = g.sum(present);
    if variant == DescriptorLossVariant::FullBce {
        let ones = g.input(Array::filled(shape[0], shape[1], 1.0));
        let inv_truth = g.sub(ones, truth_node);
        let inv_pred = g.sub(ones, predicted);
        let log_inv = g.log(inv_pred);
        let absent = g.mul(inv_truth, log_inv);
        let absent_sum = g.sum(absent);
        total = g.add(total, absent_sum);
    }
    g.scale(total, -1.0)
}

/// Pick M distinguishing points from the correctly classified set.
///
/// Confidence is the refined probability at the true class. Top-confidence
/// takes the M best (ties to the lower index); random samples M without
/// replacement from the whole correct set. When fewer than M correct points
/// exist, the available ones are listed confidence-first and the single best
/// is repeated to fill; no point is correct → empty, and the region loss
/// contributes nothing that step.
pub fn select_distinguishing(
    refined: &Array,
    labels: &[usize],
    m: usize,
    strategy: SelectionStrategy,
    seed: u64,
) -> Vec<usize> {
    assert!(m >= 1, "select_distinguishing: M must be at least 1");
    let preds = refined.row_argmax();
    let mut correct: Vec<(usize, f64)> = preds
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (p, l))| *p == *l)
        .map(|(i, (_, &l))| (i, refined.get(i, l)))
        .collect();
    if correct.is_empty() {
        return Vec::new();
    }
    // confidence descending, index ascending on ties (total order so that
    // pathological non-finite confidences cannot panic the sort)
    correct.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    if correct.len() < m {
        let mut out: Vec<usize> = correct.iter().map(|&(i, _)| i).collect();
        let best = out[0];
        out.resize(m, best);
        return out;
    }
    match strategy {
        SelectionStrategy::TopConfidence => correct.iter().take(m).map(|&(i, _)| i).collect(),
        SelectionStrategy::Random => {
            use rand::seq::SliceRandom;
            let mut rng = seeding::rng_from(seed);
            let mut pool: Vec<usize> = correct.iter().map(|&(i, _)| i).collect();
            pool.shuffle(&mut rng);
            pool.truncate(m);
            pool
        }
    }
}

/// Knobs for the region similarity loss.
#[derive(Clone, Copy, Debug)]
pub struct RegionLossOptions {
    /// Neighbors per center (same-label query).
    pub k: usize,
    /// Floor for the product of feature norms in the cosine.
    pub eps: f64,
    /// Divide each center's neighbor sum by its neighbor count. Keeps the
    /// loss in [−1, 1] when neighborhoods saturate below k; turning it off
    /// divides by the selected-point count only.
    pub per_neighbor_norm: bool,
    /// Block gradients into the center (distinguishing) features so only
    /// the neighbors move toward them.
    pub freeze_centers: bool,
}

impl Default for RegionLossOptions {
    fn default() -> Self {
        RegionLossOptions { k: 8, eps: 1e-8, per_neighbor_norm: true, freeze_centers: false }
    }
}

/// Negative mean cosine similarity between each selected center feature and
/// its same-label nearest neighbors' features. Gradients flow into both the
/// center and the neighbor rows (unless centers are frozen). Centers with no
/// same-label company are skipped; with nothing left the loss is a constant
/// zero.
pub fn region_similarity_loss(
    g: &mut Graph,
    point_features: NodeId,
    cloud: &PointCloud,
    selected: &[usize],
    opts: &RegionLossOptions,
) -> NodeId {
    assert!(opts.eps > 0.0, "region loss eps must be positive");
    let m = selected.len();
    let mut centers = Vec::new();
    let mut neighbors = Vec::new();
    let mut weights = Vec::new();
    for &center in selected {
        let nb = knn_same_label(cloud, center, opts.k)
            .expect("region similarity loss needs a labeled cloud");
        if nb.is_empty() {
            continue;
        }
        let w = if opts.per_neighbor_norm {
            1.0 / (m as f64 * nb.len() as f64)
        } else {
            1.0 / m as f64
        };
        for n in nb {
            centers.push(center);
            neighbors.push(n);
            weights.push(w);
        }
    }
    if centers.is_empty() {
        return g.input(Array::scalar(0.0));
    }

    let center_source = if opts.freeze_centers {
        g.stop_gradient(point_features)
    } else {
        point_features
    };
    let fc = g.gather_rows(center_source, &centers);
    let fn_ = g.gather_rows(point_features, &neighbors);
    let prod = g.mul(fc, fn_);
    let dots = g.row_sum(prod);
    let norm_c = g.row_norm(fc, 0.0);
    let norm_n = g.row_norm(fn_, 0.0);
    let norm_prod = g.mul(norm_c, norm_n);
    let denom = g.clamp_min(norm_prod, opts.eps);
    let cos = g.div(dots, denom);
    let w = g.input(Array::from_vec(weights.len(), 1, weights));
    let weighted = g.mul(cos, w);
    let total = g.sum(weighted);
    g.scale(total, -1.0)
}

/// Weighted sum of loss terms: Σ λ_i · term_i.
pub fn total_loss(g: &mut Graph, terms: &[(NodeId, f64)]) -> NodeId {
    assert!(!terms.is_empty(), "total_loss needs at least one term");
    for &(_, lambda) in terms {
        assert!(lambda >= 0.0, "loss weights must be non-negative");
    }
    let mut acc: Option<NodeId> = None;
    for &(node, lambda) in terms {
        let scaled = g.scale(node, lambda);
        acc = Some(match acc {
            None => scaled,
            Some(prev) => g.add(prev, scaled),
        });
    }
    acc.unwrap()
}

/// Linear warm-up for the region loss weight: 0 at epoch 0, `lambda_base`
/// from epoch ⌈warm_frac · total_epochs⌉ on.
pub fn lambda3_schedule(epoch: usize, total_epochs: usize, lambda_base: f64, warm_frac: f64) -> f64 {
    assert!(warm_frac > 0.0 && warm_frac <= 1.0, "warm_frac must be in (0, 1]");
    let warm_end = (warm_frac * total_epochs as f64).ceil() as usize;
    if warm_end == 0 || epoch >= warm_end {
        lambda_base
    } else {
        lambda_base * epoch as f64 / warm_end as f64
    }
}
