//! Gradient verification harness: builds a small fixture model and checks
//! every parameter group's analytic gradient against central differences,
//! per loss term and for the weighted combination.

use crate::autodiff::{grad_check, Array, Graph, NodeId};
use crate::backbone::{forward_full, ForwardOptions, ModelConfig, ModelParams, ParamNodes};
use crate::descriptor::ground_truth_descriptor;
use crate::geometry::PointCloud;
use crate::losses::{
    cls_loss, descriptor_loss, region_similarity_loss, select_distinguishing, total_loss,
    DescriptorLossVariant, RegionLossOptions, SelectionStrategy,
};
use crate::seeding;

/// Default tolerance for the full-model check.
pub const FULL_MODEL_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub loss: &'static str,
    pub group: &'static str,
    pub max_rel_error: f64,
    pub params_checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
    /// Classification adjoints of the scene head are bit-exact zeros.
    pub scene_head_cls_adjoint_zero: bool,
    /// Sum of |∂L_cls/∂scene_head| — nonzero only with the stop-gradient
    /// disabled (debug mode).
    pub scene_head_cls_adjoint_mass: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.worst() <= tolerance && self.scene_head_cls_adjoint_zero
    }

    /// The first case exceeding the tolerance, if any.
    pub fn first_failure(&self, tolerance: f64) -> Option<&GradCheckCase> {
        self.cases.iter().find(|c| c.max_rel_error > tolerance)
    }
}

/// Options for the verification run.
#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub step: f64,
    /// Disable the stop-gradient between descriptor and masking (debug).
    pub stop_gradient: bool,
    /// Corrupt the ReLU backward rule to prove the checker catches it.
    pub fault_relu: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 7, step: 1e-5, stop_gradient: true, fault_relu: false }
    }
}

fn fixture_cloud(seed: u64, n_points: usize, n_classes: usize) -> PointCloud {
    let mut rng = seeding::rng_from(seed);
    let coords = Array::random_uniform(n_points, 3, 0.0, 1.0, &mut rng);
    // round-robin labels guarantee every class appears
    let labels = (0..n_points).map(|i| i % n_classes).collect();
    PointCloud::new(coords, Some(labels))
}

fn fixture_model(seed: u64, n_classes: usize) -> ModelParams {
    let cfg = ModelConfig {
        encoder_widths: vec![8, 16],
        post_widths: vec![16, 8],
        head_widths: vec![8, 8],
        n_classes,
    };
    let mut params = ModelParams::init(&cfg, seed);
    // jitter the biases (training starts them at zero): zero biases plus
    // non-negative relu inputs leave dead units whose pre-activations sit
    // exactly on the relu kink, which no finite-difference step can probe
    let mut rng = seeding::rng_from(seeding::mix(seed, 0xB1A5));
    use rand::Rng;
    for (name, array) in params.named_mut() {
        if name.ends_with("bias") {
            for v in array.data_mut() {
                *v = rng.gen_range(-0.2..0.2);
            }
        }
    }
    params
}

struct LossCase {
    name: &'static str,
    build: Box<dyn Fn(&mut Graph, NodeId, NodeId, NodeId) -> NodeId>,
}

/// A fixture is only usable when every piecewise boundary in the combined
/// graph sits well clear of the probe width, otherwise a ±h step flips a
/// relu or an argmax and the central-difference oracle reports garbage.
const KINK_MARGIN: f64 = 3e-4;
const FIXTURE_ATTEMPTS: u64 = 64;

fn pick_fd_safe_fixture(opts: &VerifyOptions, n_classes: usize) -> (PointCloud, ModelParams) {
    for attempt in 0..FIXTURE_ATTEMPTS {
        let seed = seeding::mix(opts.seed, attempt);
        let cloud = fixture_cloud(seeding::mix(seed, 0xF1), 16, n_classes);
        let params = fixture_model(seeding::mix(seed, 0xF2), n_classes);
        let labels = cloud.labels.clone().unwrap();
        let truth = ground_truth_descriptor(&labels, n_classes).unwrap();
        let forward_opts =
            ForwardOptions { stop_gradient: opts.stop_gradient, ..ForwardOptions::default() };
        let mut fp = forward_full(&cloud, &params, &forward_opts);
        let g = &mut fp.graph;
        // the combined loss touches every op family the checks exercise
        let cls = cls_loss(g, fp.refined, &labels, n_classes);
        let des = descriptor_loss(g, fp.descriptor, &truth, DescriptorLossVariant::FullBce);
        let selected = select_distinguishing(
            g.value(fp.refined),
            &labels,
            6,
            SelectionStrategy::TopConfidence,
            0,
        );
        let region_opts = RegionLossOptions { k: 3, ..RegionLossOptions::default() };
        let rs = region_similarity_loss(g, fp.point_features, &cloud, &selected, &region_opts);
        let _ = total_loss(g, &[(cls, 1.0), (des, 1.0), (rs, 1.0)]);
        if g.kink_margin() >= KINK_MARGIN {
            if attempt > 0 {
                log::debug!("fixture seed re-derived {attempt} times to clear piecewise kinks");
            }
            return (cloud, params);
        }
    }
    panic!("no finite-difference-safe fixture found in {FIXTURE_ATTEMPTS} attempts");
}

/// Check every loss × parameter group on a 16-point, 4-class fixture.
pub fn run_gradient_verification(opts: &VerifyOptions) -> GradCheckReport {
    let n_classes = 4;
    let (cloud, params) = pick_fd_safe_fixture(opts, n_classes);
    let labels = cloud.labels.clone().unwrap();
    let truth = ground_truth_descriptor(&labels, n_classes).unwrap();
    let region_opts = RegionLossOptions { k: 3, ..RegionLossOptions::default() };

    let forward_opts = ForwardOptions { stop_gradient: opts.stop_gradient, ..ForwardOptions::default() };

    let labels_cls = labels.clone();
    let cloud_rs = cloud.clone();
    let labels_rs = labels.clone();
    let truth_des = truth.clone();
    let truth_comb = truth.clone();
    let cloud_comb = cloud.clone();
    let labels_comb = labels.clone();

    let cases: Vec<LossCase> = vec![
        LossCase {
            name: "cls",
            build: Box::new(move |g, refined, _desc, _feats| {
                cls_loss(g, refined, &labels_cls, n_classes)
            }),
        },
        LossCase {
            name: "descriptor_present_only",
            build: Box::new(move |g, _refined, desc, _feats| {
                descriptor_loss(g, desc, &truth, DescriptorLossVariant::PresentOnly)
            }),
        },
        LossCase {
            name: "descriptor_full_bce",
            build: Box::new(move |g, _refined, desc, _feats| {
                descriptor_loss(g, desc, &truth_des, DescriptorLossVariant::FullBce)
            }),
        },
        LossCase {
            name: "region",
            build: Box::new(move |g, refined, _desc, feats| {
                let selected = select_distinguishing(
                    g.value(refined),
                    &labels_rs,
                    6,
                    SelectionStrategy::TopConfidence,
                    0,
                );
                region_similarity_loss(g, feats, &cloud_rs, &selected, &region_opts)
            }),
        },
        LossCase {
            name: "combined",
            build: Box::new(move |g, refined, desc, feats| {
                let cls = cls_loss(g, refined, &labels_comb, n_classes);
                let des = descriptor_loss(g, desc, &truth_comb, DescriptorLossVariant::FullBce);
                let selected = select_distinguishing(
                    g.value(refined),
                    &labels_comb,
                    6,
                    SelectionStrategy::TopConfidence,
                    0,
                );
                let rs = region_similarity_loss(g, feats, &cloud_comb, &selected, &region_opts);
                total_loss(g, &[(cls, 1.0), (des, 1.0), (rs, 1.0)])
            }),
        },
    ];

    let mut report_cases = Vec::new();
    let mut head_zero = true;
    let mut head_mass = 0.0;

    for case in &cases {
        let mut fp = forward_full(&cloud, &params, &forward_opts);
        if opts.fault_relu {
            fp.graph.debug_fault_relu_backward(true);
        }
        let loss = (case.build)(&mut fp.graph, fp.refined, fp.descriptor, fp.point_features);

        if case.name == "cls" {
            let grads = fp.graph.backward(loss);
            head_mass = group_ids(&fp.params, "scene_head")
                .iter()
                .filter_map(|&id| grads.get(id))
                .flat_map(|a| a.data().iter().map(|v| v.abs()))
                .sum();
            head_zero = head_mass == 0.0;
        }

        for group in ParamNodes::group_names() {
            let ids = group_ids(&fp.params, group);
            let mut worst: f64 = 0.0;
            let mut count = 0;
            for id in ids {
                worst = worst.max(grad_check(&mut fp.graph, loss, id, opts.step));
                count += fp.graph.value(id).len();
            }
            report_cases.push(GradCheckCase {
                loss: case.name,
                group,
                max_rel_error: worst,
                params_checked: count,
            });
        }
    }

    GradCheckReport {
        cases: report_cases,
        scene_head_cls_adjoint_zero: head_zero,
        scene_head_cls_adjoint_mass: head_mass,
    }
}

fn group_ids(params: &ParamNodes, group: &str) -> Vec<NodeId> {
    params.group(group)
}
