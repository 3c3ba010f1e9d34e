//! Shared-MLP segmentation backbone.
//!
//! Per-point layers are applied identically to every point (weights shared
//! across rows), a column-wise max-pool produces the global feature, and the
//! pooled vector is broadcast back and concatenated before two more shared
//! layers. That is the smallest architecture with the local + global mixing
//! the scene head needs; richer point convolutions plug in behind the same
//! contracts.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Array, Graph, NodeId};
use crate::descriptor;
use crate::geometry::PointCloud;
use crate::seeding;

/// Layer widths. The defaults keep a desk-scale model: encoder 32-64-128,
/// max-pool to a 128-wide global feature, then 128-64 after the concat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_encoder_widths")]
    pub encoder_widths: Vec<usize>,
    #[serde(default = "default_post_widths")]
    pub post_widths: Vec<usize>,
    #[serde(default = "default_head_widths")]
    pub head_widths: Vec<usize>,
    pub n_classes: usize,
}

fn default_encoder_widths() -> Vec<usize> {
    vec![32, 64, 128]
}
fn default_post_widths() -> Vec<usize> {
    vec![128, 64]
}
fn default_head_widths() -> Vec<usize> {
    vec![64, 64]
}

impl ModelConfig {
    pub fn with_classes(n_classes: usize) -> Self {
        ModelConfig {
            encoder_widths: default_encoder_widths(),
            post_widths: default_post_widths(),
            head_widths: default_head_widths(),
            n_classes,
        }
    }

    /// Width of the pooled global feature.
    pub fn global_dim(&self) -> usize {
        *self.encoder_widths.last().expect("encoder needs at least one layer")
    }

    /// Width of the final per-point feature.
    pub fn feature_dim(&self) -> usize {
        *self.post_widths.last().expect("post stack needs at least one layer")
    }
}

/// One affine layer: y = x·W + b with W in (in × out) and b a 1×out row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array,
    pub bias: Array,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut impl rand::Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Dense {
            weight: Array::random_uniform(fan_in, fan_out, -bound, bound, rng),
            bias: Array::zeros(1, fan_out),
        }
    }
}

/// Graph handles for one registered layer.
#[derive(Clone, Copy, Debug)]
pub struct DenseNodes {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// Affine transform through the graph: x·W broadcast-plus bias.
pub fn affine(g: &mut Graph, x: NodeId, layer: DenseNodes) -> NodeId {
    let xw = g.matmul(x, layer.weight);
    g.add(xw, layer.bias)
}

/// All trainable state: encoder stack, post-concat stack, classifier head,
/// and the scene-descriptor head.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub encoder: Vec<Dense>,
    pub post: Vec<Dense>,
    pub classifier: Dense,
    pub scene_head: Vec<Dense>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, deterministic in the seed.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = seeding::rng_from(seed);
        let mut encoder = Vec::new();
        let mut dim = 3;
        for &w in &config.encoder_widths {
            encoder.push(Dense::init(dim, w, &mut rng));
            dim = w;
        }
        let global = config.global_dim();
        let mut post = Vec::new();
        let mut pdim = dim + global;
        for &w in &config.post_widths {
            post.push(Dense::init(pdim, w, &mut rng));
            pdim = w;
        }
        let classifier = Dense::init(pdim, config.n_classes, &mut rng);
        let mut scene_head = Vec::new();
        let mut hdim = global;
        for &w in &config.head_widths {
            scene_head.push(Dense::init(hdim, w, &mut rng));
            hdim = w;
        }
        scene_head.push(Dense::init(hdim, config.n_classes, &mut rng));
        ModelParams { config: config.clone(), encoder, post, classifier, scene_head }
    }

    /// Zero-valued parameters with the shapes the config implies (used when
    /// loading a checkpoint payload).
    pub fn zeros(config: &ModelConfig) -> Self {
        let zero = |fan_in: usize, fan_out: usize| Dense {
            weight: Array::zeros(fan_in, fan_out),
            bias: Array::zeros(1, fan_out),
        };
        let mut encoder = Vec::new();
        let mut dim = 3;
        for &w in &config.encoder_widths {
            encoder.push(zero(dim, w));
            dim = w;
        }
        let global = config.global_dim();
        let mut post = Vec::new();
        let mut pdim = dim + global;
        for &w in &config.post_widths {
            post.push(zero(pdim, w));
            pdim = w;
        }
        let classifier = zero(pdim, config.n_classes);
        let mut scene_head = Vec::new();
        let mut hdim = global;
        for &w in &config.head_widths {
            scene_head.push(zero(hdim, w));
            hdim = w;
        }
        scene_head.push(zero(hdim, config.n_classes));
        ModelParams { config: config.clone(), encoder, post, classifier, scene_head }
    }

    /// Named views over every parameter array, in a fixed order shared by
    /// gradient flattening, Adam state, and checkpoint payloads.
    pub fn named(&self) -> Vec<(String, &Array)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), &l.weight));
            out.push((format!("encoder.{i}.bias"), &l.bias));
        }
        for (i, l) in self.post.iter().enumerate() {
            out.push((format!("post.{i}.weight"), &l.weight));
            out.push((format!("post.{i}.bias"), &l.bias));
        }
        out.push(("classifier.weight".to_string(), &self.classifier.weight));
        out.push(("classifier.bias".to_string(), &self.classifier.bias));
        for (i, l) in self.scene_head.iter().enumerate() {
            out.push((format!("scene_head.{i}.weight"), &l.weight));
            out.push((format!("scene_head.{i}.bias"), &l.bias));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Array)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.iter_mut().enumerate() {
            out.push((format!("encoder.{i}.weight"), &mut l.weight));
            out.push((format!("encoder.{i}.bias"), &mut l.bias));
        }
        for (i, l) in self.post.iter_mut().enumerate() {
            out.push((format!("post.{i}.weight"), &mut l.weight));
            out.push((format!("post.{i}.bias"), &mut l.bias));
        }
        out.push(("classifier.weight".to_string(), &mut self.classifier.weight));
        out.push(("classifier.bias".to_string(), &mut self.classifier.bias));
        for (i, l) in self.scene_head.iter_mut().enumerate() {
            out.push((format!("scene_head.{i}.weight"), &mut l.weight));
            out.push((format!("scene_head.{i}.bias"), &mut l.bias));
        }
        out
    }
}

/// Graph handles for every registered parameter, in `named()` order.
pub struct ParamNodes {
    pub encoder: Vec<DenseNodes>,
    pub post: Vec<DenseNodes>,
    pub classifier: DenseNodes,
    pub scene_head: Vec<DenseNodes>,
    /// Flat view aligned with `ModelParams::named()`.
    pub flat: Vec<(String, NodeId)>,
}

impl ParamNodes {
    /// Node ids of one parameter group ("encoder", "post", "classifier",
    /// "scene_head").
    pub fn group(&self, name: &str) -> Vec<NodeId> {
        self.flat
            .iter()
            .filter(|(n, _)| n.split('.').next() == Some(name))
            .map(|&(_, id)| id)
            .collect()
    }

    pub fn group_names() -> [&'static str; 4] {
        ["encoder", "post", "classifier", "scene_head"]
    }
}

/// Register every parameter as a trainable graph leaf.
pub fn register_params(g: &mut Graph, params: &ModelParams) -> ParamNodes {
    let mut flat = Vec::new();
    let reg_stack = |g: &mut Graph, stack: &[Dense], prefix: &str, flat: &mut Vec<(String, NodeId)>| {
        stack
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let weight = g.param(l.weight.clone());
                let bias = g.param(l.bias.clone());
                flat.push((format!("{prefix}.{i}.weight"), weight));
                flat.push((format!("{prefix}.{i}.bias"), bias));
                DenseNodes { weight, bias }
            })
            .collect::<Vec<_>>()
    };
    let encoder = reg_stack(g, &params.encoder, "encoder", &mut flat);
    let post = reg_stack(g, &params.post, "post", &mut flat);
    let classifier = DenseNodes {
        weight: g.param(params.classifier.weight.clone()),
        bias: g.param(params.classifier.bias.clone()),
    };
    flat.push(("classifier.weight".to_string(), classifier.weight));
    flat.push(("classifier.bias".to_string(), classifier.bias));
    let scene_head = reg_stack(g, &params.scene_head, "scene_head", &mut flat);
    ParamNodes { encoder, post, classifier, scene_head, flat }
}

/// Per-point features and the pooled global feature.
///
/// Shared weights make the row order irrelevant: permuting the input points
/// permutes the feature rows identically and leaves the pooled vector
/// untouched.
pub fn encode(g: &mut Graph, coords: NodeId, nodes: &ParamNodes) -> (NodeId, NodeId) {
    let mut h = coords;
    for layer in &nodes.encoder {
        let a = affine(g, h, *layer);
        h = g.relu(a);
    }
    let global = g.maxpool_cols(h);
    let n = g.value(h).rows();
    let gdim = g.value(global).cols();
    // broadcast the pooled row back to every point
    let ones = g.input(Array::filled(n, gdim, 1.0));
    let tiled = g.mul(ones, global);
    let mut f = g.concat_cols(h, tiled);
    for layer in &nodes.post {
        let a = affine(g, f, *layer);
        f = g.relu(a);
    }
    (f, global)
}

/// Affine classifier head plus row-softmax: rows are class probabilities.
pub fn classify(g: &mut Graph, point_features: NodeId, nodes: &ParamNodes) -> NodeId {
    let logits = affine(g, point_features, nodes.classifier);
    g.softmax(logits)
}

/// Switches for a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOptions {
    /// When false the descriptor never touches the probabilities
    /// (refined == probs).
    pub scene_encoder: bool,
    /// Block classification adjoints from reaching the scene head. On by
    /// default; turning it off is a debug switch.
    pub stop_gradient: bool,
    /// Replace the predicted descriptor with a fixed vector (tests).
    pub descriptor_override: Option<Array>,
    /// Threshold the descriptor at τ before masking (debug switch; the
    /// default feeds the raw probabilities through).
    pub binarize_tau: Option<f64>,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            scene_encoder: true,
            stop_gradient: true,
            descriptor_override: None,
            binarize_tau: None,
        }
    }
}

/// Everything a full forward pass produces, as live graph nodes.
pub struct ForwardPass {
    pub graph: Graph,
    pub params: ParamNodes,
    pub coords: NodeId,
    pub point_features: NodeId,
    pub global_feature: NodeId,
    pub probs: NodeId,
    /// Predicted descriptor (before any stop-gradient wrapping); this is the
    /// node the descriptor loss supervises.
    pub descriptor: NodeId,
    pub refined: NodeId,
}

/// Encoder → classifier → scene head → descriptor-masked renormalization.
pub fn forward_full(cloud: &PointCloud, params: &ModelParams, opts: &ForwardOptions) -> ForwardPass {
    let mut g = Graph::new();
    let nodes = register_params(&mut g, params);
    let coords = g.input(cloud.coords.clone());
    let (point_features, global_feature) = encode(&mut g, coords, &nodes);
    let probs = classify(&mut g, point_features, &nodes);
    let descriptor = match &opts.descriptor_override {
        Some(d) => {
            assert_eq!(d.shape(), [1, params.config.n_classes], "descriptor override shape");
            g.input(d.clone())
        }
        None => descriptor::scene_encoder_forward(&mut g, global_feature, &nodes.scene_head),
    };
    let refined = if opts.scene_encoder {
        let mut masking = descriptor;
        if let Some(tau) = opts.binarize_tau {
            let hard = descriptor::binarize(g.value(descriptor), tau);
            masking = g.input(hard);
        }
        if opts.stop_gradient {
            masking = g.stop_gradient(masking);
        }
        descriptor::refine_probabilities(&mut g, probs, masking)
    } else {
        probs
    };
    ForwardPass {
        graph: g,
        params: nodes,
        coords,
        point_features,
        global_feature,
        probs,
        descriptor,
        refined,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            encoder_widths: vec![8, 16],
            post_widths: vec![16, 8],
            head_widths: vec![8, 8],
            n_classes: 4,
        }
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = seeding::rng_from(seed);
        let coords = Array::random_uniform(n, 3, 0.0, 1.0, &mut rng);
        PointCloud::new(coords, Some((0..n).map(|i| i % 4).collect()))
    }

    fn bits(a: &Array) -> Vec<u64> {
        a.data().iter().map(|v| v.to_bits()).collect()
    }

    #[test]
    fn rows_of_probs_and_refined_sum_to_one() {
        let cloud = random_cloud(20, 3);
        let params = ModelParams::init(&tiny_config(), 9);
        let fp = forward_full(&cloud, &params, &ForwardOptions::default());
        for node in [fp.probs, fp.refined] {
            let v = fp.graph.value(node);
            for i in 0..v.rows() {
                let s: f64 = v.row_slice(i).iter().sum();
                assert!((s - 1.0).abs() <= 1e-9, "row {i} sums to {s}");
                assert!(v.row_slice(i).iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn duplicating_points_keeps_global_feature() {
        let cloud = random_cloud(12, 4);
        let mut doubled = Array::zeros(24, 3);
        for i in 0..12 {
            for j in 0..3 {
                doubled.set(i, j, cloud.coords.get(i, j));
                doubled.set(12 + i, j, cloud.coords.get(i, j));
            }
        }
        let cloud2 = PointCloud::new(doubled, None);
        let params = ModelParams::init(&tiny_config(), 9);
        let fp1 = forward_full(&cloud, &params, &ForwardOptions::default());
        let fp2 = forward_full(&cloud2, &params, &ForwardOptions::default());
        assert_eq!(
            bits(fp1.graph.value(fp1.global_feature)),
            bits(fp2.graph.value(fp2.global_feature))
        );
    }

    #[test]
    fn permutation_equivariance() {
        let cloud = random_cloud(15, 5);
        let perm: Vec<usize> = vec![14, 3, 7, 0, 11, 1, 9, 2, 13, 4, 8, 5, 12, 6, 10];
        let mut permuted = Array::zeros(15, 3);
        for (dst, &src) in perm.iter().enumerate() {
            for j in 0..3 {
                permuted.set(dst, j, cloud.coords.get(src, j));
            }
        }
        let cloud2 = PointCloud::new(permuted, None);
        let params = ModelParams::init(&tiny_config(), 9);
        let fp1 = forward_full(&cloud, &params, &ForwardOptions::default());
        let fp2 = forward_full(&cloud2, &params, &ForwardOptions::default());

        assert_eq!(
            bits(fp1.graph.value(fp1.global_feature)),
            bits(fp2.graph.value(fp2.global_feature))
        );
        assert_eq!(
            bits(fp1.graph.value(fp1.descriptor)),
            bits(fp2.graph.value(fp2.descriptor))
        );
        for (out1, out2) in [
            (fp1.point_features, fp2.point_features),
            (fp1.probs, fp2.probs),
            (fp1.refined, fp2.refined),
        ] {
            let (v1, v2) = (fp1.graph.value(out1), fp2.graph.value(out2));
            for (dst, &src) in perm.iter().enumerate() {
                assert_eq!(
                    v1.row_slice(src)
                        .iter()
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>(),
                    v2.row_slice(dst)
                        .iter()
                        .map(|v| v.to_bits())
                        .collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn single_point_global_equals_its_embedding() {
        let cloud = random_cloud(1, 6);
        let params = ModelParams::init(&tiny_config(), 9);
        let fp = forward_full(&cloud, &params, &ForwardOptions::default());
        let global = fp.graph.value(fp.global_feature);
        assert_eq!(global.rows(), 1);
        // with one point the pool is the identity: recompute the embedding
        let mut g = Graph::new();
        let nodes = register_params(&mut g, &params);
        let coords = g.input(cloud.coords.clone());
        let mut h = coords;
        for layer in &nodes.encoder {
            let a = affine(&mut g, h, *layer);
            h = g.relu(a);
        }
        assert_eq!(bits(g.value(h)), bits(global));
    }

    #[test]
    fn all_ones_descriptor_leaves_probs_unchanged() {
        let cloud = random_cloud(10, 7);
        let params = ModelParams::init(&tiny_config(), 9);
        let opts = ForwardOptions {
            descriptor_override: Some(Array::filled(1, 4, 1.0)),
            ..ForwardOptions::default()
        };
        let fp = forward_full(&cloud, &params, &opts);
        let probs = fp.graph.value(fp.probs);
        let refined = fp.graph.value(fp.refined);
        assert!(probs.max_abs_diff(refined) <= 1e-12);
    }

    #[test]
    fn one_hot_descriptor_forces_one_hot_rows() {
        let cloud = random_cloud(10, 8);
        let params = ModelParams::init(&tiny_config(), 9);
        let opts = ForwardOptions {
            descriptor_override: Some(Array::row(vec![0.0, 0.0, 1.0, 0.0])),
            ..ForwardOptions::default()
        };
        let fp = forward_full(&cloud, &params, &opts);
        let refined = fp.graph.value(fp.refined);
        for i in 0..refined.rows() {
            assert_eq!(refined.get(i, 2), 1.0);
            assert_eq!(refined.get(i, 0), 0.0);
            assert_eq!(refined.get(i, 1), 0.0);
            assert_eq!(refined.get(i, 3), 0.0);
        }
    }

    #[test]
    fn scene_encoder_off_bypasses_refinement() {
        let cloud = random_cloud(9, 2);
        let params = ModelParams::init(&tiny_config(), 9);
        let opts = ForwardOptions { scene_encoder: false, ..ForwardOptions::default() };
        let fp = forward_full(&cloud, &params, &opts);
        assert_eq!(fp.probs, fp.refined);
    }

    #[test]
    fn stop_gradient_shields_scene_head_from_cls_loss() {
        let cloud = random_cloud(12, 10);
        let params = ModelParams::init(&tiny_config(), 9);
        let labels = cloud.labels.clone().unwrap();

        let run = |stop: bool| {
            let opts = ForwardOptions { stop_gradient: stop, ..ForwardOptions::default() };
            let mut fp = forward_full(&cloud, &params, &opts);
            let loss = crate::losses::cls_loss(&mut fp.graph, fp.refined, &labels, 4);
            let grads = fp.graph.backward(loss);
            fp.params
                .group("scene_head")
                .iter()
                .map(|&id| grads.dense(id, fp.graph.value(id).shape()))
                .collect::<Vec<_>>()
        };

        for g in run(true) {
            assert!(g.data().iter().all(|&v| v == 0.0), "expected exact zeros");
        }
        let loose: f64 = run(false)
            .iter()
            .flat_map(|a| a.data().iter().map(|v| v.abs()))
            .sum();
        assert!(loose > 0.0, "without stop-gradient the head must receive gradient");
    }
}
