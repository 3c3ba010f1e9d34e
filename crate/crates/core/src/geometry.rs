//! Point-cloud container and brute-force nearest-neighbor queries.
//!
//! Brute force is deliberate: at desk scale (a few thousand points) it is
//! fast enough and trivially checkable against a full-sort oracle. Distance
//! ties break toward the lower point index so every query is deterministic.

use thiserror::Error;

use crate::autodiff::Array;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("knn: k = {k} must be at least 1 and less than the point count {n}")]
    BadK { k: usize, n: usize },
    #[error("knn_same_label requires a labeled cloud")]
    MissingLabels,
}

/// N points with optional per-point class labels and the name of the
/// template that generated the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub coords: Array,
    pub labels: Option<Vec<usize>>,
    pub scene_type: Option<String>,
}

impl PointCloud {
    pub fn new(coords: Array, labels: Option<Vec<usize>>) -> Self {
        assert_eq!(coords.cols(), 3, "point coordinates must be N×3");
        assert!(coords.rows() >= 1, "a point cloud needs at least one point");
        if let Some(l) = &labels {
            assert_eq!(l.len(), coords.rows(), "label count must match point count");
        }
        PointCloud { coords, labels, scene_type: None }
    }

    pub fn with_scene_type(mut self, scene_type: impl Into<String>) -> Self {
        self.scene_type = Some(scene_type.into());
        self
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        false // N ≥ 1 by construction
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        [self.coords.get(i, 0), self.coords.get(i, 1), self.coords.get(i, 2)]
    }

    /// Squared Euclidean distance between two points.
    pub fn dist2(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.point(a), self.point(b));
        let dx = pa[0] - pb[0];
        let dy = pa[1] - pb[1];
        let dz = pa[2] - pb[2];
        dx * dx + dy * dy + dz * dz
    }

    /// Translate so the min corner is at the origin, then scale uniformly so
    /// the largest extent becomes 1. Uniform scaling preserves neighbor
    /// ordering, so KNN results are unchanged.
    pub fn normalized_to_unit_cube(&self) -> PointCloud {
        let n = self.len();
        let mut mins = [f64::INFINITY; 3];
        let mut maxs = [f64::NEG_INFINITY; 3];
        for i in 0..n {
            let p = self.point(i);
            for a in 0..3 {
                mins[a] = mins[a].min(p[a]);
                maxs[a] = maxs[a].max(p[a]);
            }
        }
        let extent = (0..3).map(|a| maxs[a] - mins[a]).fold(0.0, f64::max);
        let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
        let mut coords = Array::zeros(n, 3);
        for i in 0..n {
            let p = self.point(i);
            for a in 0..3 {
                coords.set(i, a, (p[a] - mins[a]) * scale);
            }
        }
        PointCloud {
            coords,
            labels: self.labels.clone(),
            scene_type: self.scene_type.clone(),
        }
    }
}

/// Keep the k best (distance, index) pairs with insertion into a small
/// sorted buffer: O(N·k), no full sort. Order is (distance, index) ascending.
fn select_k_best(candidates: impl Iterator<Item = (f64, usize)>, k: usize) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (d, i) in candidates {
        let pos = best.partition_point(|&(bd, bi)| (bd, bi) < (d, i));
        if pos < k {
            best.insert(pos, (d, i));
            if best.len() > k {
                best.pop();
            }
        }
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// The k nearest points to `center` (excluding it), ties broken by
/// ascending index.
pub fn knn(cloud: &PointCloud, center: usize, k: usize) -> Result<Vec<usize>, GeometryError> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(GeometryError::BadK { k, n });
    }
    Ok(select_k_best(
        (0..n).filter(|&i| i != center).map(|i| (cloud.dist2(center, i), i)),
        k,
    ))
}

/// The up-to-k nearest points sharing `center`'s label, excluding the
/// center. Returns fewer than k (possibly none) when the label population
/// is small; an empty result tells the loss to skip this center.
pub fn knn_same_label(
    cloud: &PointCloud,
    center: usize,
    k: usize,
) -> Result<Vec<usize>, GeometryError> {
    let labels = cloud.labels.as_ref().ok_or(GeometryError::MissingLabels)?;
    let target = labels[center];
    Ok(select_k_best(
        (0..cloud.len())
            .filter(|&i| i != center && labels[i] == target)
            .map(|i| (cloud.dist2(center, i), i)),
        k,
    ))
}
