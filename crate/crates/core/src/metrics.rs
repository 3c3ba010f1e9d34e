//! Segmentation and descriptor quality metrics.
//!
//! IoU follows the usual benchmark conventions: classes absent from both
//! truth and prediction are excluded from means rather than scored zero.
//! The noise score quantifies local label speckle: the fraction of points
//! whose predicted label loses the majority vote of their spatial neighbors.

use crate::autodiff::Array;
use crate::geometry::{knn, PointCloud};

/// Rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix { n: n_classes, counts: vec![0; n_classes * n_classes] }
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn record(&mut self, truth: usize, prediction: usize) {
        assert!(truth < self.n && prediction < self.n);
        self.counts[truth * self.n + prediction] += 1;
    }

    pub fn record_all(&mut self, truth: &[usize], predictions: &[usize]) {
        assert_eq!(truth.len(), predictions.len());
        for (&t, &p) in truth.iter().zip(predictions) {
            self.record(t, p);
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn get(&self, truth: usize, prediction: usize) -> u64 {
        self.counts[truth * self.n + prediction]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn class_stats(&self, c: usize) -> (u64, u64, u64) {
        let tp = self.get(c, c);
        let fp: u64 = (0..self.n).filter(|&t| t != c).map(|t| self.get(t, c)).sum();
        let fn_: u64 = (0..self.n).filter(|&p| p != c).map(|p| self.get(c, p)).sum();
        (tp, fp, fn_)
    }

    /// Per-class IoU; `None` when the class has zero union.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.n)
            .map(|c| {
                let (tp, fp, fn_) = self.class_stats(c);
                let union = tp + fp + fn_;
                if union == 0 {
                    None
                } else {
                    Some(tp as f64 / union as f64)
                }
            })
            .collect()
    }

    /// Mean IoU over classes with nonzero union.
    pub fn miou(&self) -> f64 {
        let ious: Vec<f64> = self.per_class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            0.0
        } else {
            ious.iter().sum::<f64>() / ious.len() as f64
        }
    }

    /// Fraction of the pair's true points confused with the other pair
    /// member: (C[a,b] + C[b,a]) / (truth(a) + truth(b)).
    pub fn pair_confusion_rate(&self, a: usize, b: usize) -> f64 {
        let cross = self.get(a, b) + self.get(b, a);
        let truth: u64 = (0..self.n).map(|p| self.get(a, p) + self.get(b, p)).sum();
        if truth == 0 {
            0.0
        } else {
            cross as f64 / truth as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
    /// Mean over categories (scene templates here) of the per-category
    /// pooled mean IoU. Equals `miou` when no category split is supplied.
    pub mciou: f64,
}

/// IoU summary from a pooled confusion plus optional per-category pools.
pub fn iou_report(pooled: &ConfusionMatrix, per_category: &[(String, ConfusionMatrix)]) -> IouReport {
    let miou = pooled.miou();
    let mciou = if per_category.is_empty() {
        miou
    } else {
        per_category.iter().map(|(_, c)| c.miou()).sum::<f64>() / per_category.len() as f64
    };
    IouReport { per_class: pooled.per_class_iou(), miou, mciou }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn prf(tp: u64, fp: u64, fn_: u64) -> PrecisionRecall {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PrecisionRecall { precision, recall, f1 }
}

#[derive(Clone, Debug)]
pub struct DescriptorReport {
    pub per_class: Vec<PrecisionRecall>,
    pub micro: PrecisionRecall,
}

/// Multi-label precision/recall/F1 for predicted descriptors binarized at τ.
pub fn descriptor_f1(predicted: &[Array], truth: &[Array], tau: f64) -> DescriptorReport {
    assert!(tau > 0.0 && tau < 1.0, "threshold τ must lie in (0, 1)");
    assert_eq!(predicted.len(), truth.len());
    assert!(!predicted.is_empty(), "descriptor_f1 needs at least one scene");
    let n = predicted[0].cols();
    let mut tp = vec![0u64; n];
    let mut fp = vec![0u64; n];
    let mut fn_ = vec![0u64; n];
    for (pred, t) in predicted.iter().zip(truth) {
        assert_eq!(pred.shape(), [1, n]);
        assert_eq!(t.shape(), [1, n]);
        for j in 0..n {
            let hit = pred.get(0, j) >= tau;
            let present = t.get(0, j) > 0.5;
            match (hit, present) {
                (true, true) => tp[j] += 1,
                (true, false) => fp[j] += 1,
                (false, true) => fn_[j] += 1,
                (false, false) => {}
            }
        }
    }
    let per_class = (0..n).map(|j| prf(tp[j], fp[j], fn_[j])).collect();
    let micro = prf(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    DescriptorReport { per_class, micro }
}

/// Fraction of points whose predicted label is strictly outvoted among the
/// predicted labels of their k nearest neighbors. A tie with the best other
/// label counts as non-noisy.
pub fn noise_score(cloud: &PointCloud, predictions: &[usize], k: usize) -> f64 {
    assert!(k >= 1, "noise_score needs k >= 1");
    let n = cloud.len();
    assert_eq!(n, predictions.len());
    if n == 1 {
        return 0.0;
    }
    let k = k.min(n - 1);
    let n_classes = predictions.iter().max().unwrap() + 1;
    let mut noisy = 0usize;
    let mut votes = vec![0usize; n_classes];
    for i in 0..n {
        votes.iter_mut().for_each(|v| *v = 0);
        for j in knn(cloud, i, k).expect("k validated above") {
            votes[predictions[j]] += 1;
        }
        let own = votes[predictions[i]];
        if votes.iter().any(|&v| v > own) {
            noisy += 1;
        }
    }
    noisy as f64 / n as f64
}
