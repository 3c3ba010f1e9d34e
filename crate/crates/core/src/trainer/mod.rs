//! The end-to-end optimization loop: batching, Adam updates, the region-loss
//! weight ramp, per-epoch validation, and checkpointing.

mod adam;
mod checkpoint;

pub use adam::{adam_step, apply_updates, AdamHyper, AdamState};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_FORMAT,
};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Array;
use crate::backbone::{forward_full, ForwardOptions, ModelConfig, ModelParams};
use crate::data::{Dataset, Split};
use crate::descriptor::{ground_truth_descriptor, DescriptorError};
use crate::geometry::{GeometryError, PointCloud};
use crate::losses::{
    cls_loss, descriptor_loss, lambda3_schedule, region_similarity_loss, select_distinguishing,
    total_loss, DescriptorLossVariant, RegionLossOptions, SelectionStrategy,
};
use crate::metrics::{descriptor_f1, iou_report, noise_score, ConfusionMatrix, DescriptorReport, IouReport};
use crate::seeding;

/// Neighborhood size for the evaluation noise score.
pub const EVAL_NOISE_K: usize = 8;
/// Binarization threshold for descriptor precision/recall at evaluation.
pub const EVAL_DESCRIPTOR_TAU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite {term} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, term: &'static str },
    #[error("dataset has no {0:?} split")]
    MissingSplit(Split),
    #[error("training requires labeled clouds")]
    UnlabeledCloud,
    #[error("checkpoint was trained with {checkpoint} classes but the dataset has {dataset}")]
    ClassCountMismatch { checkpoint: usize, dataset: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Backbone widths, separated from the class count (which always follows
/// the dataset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelWidths {
    #[serde(default = "d_encoder")]
    pub encoder: Vec<usize>,
    #[serde(default = "d_post")]
    pub post: Vec<usize>,
    #[serde(default = "d_head")]
    pub head: Vec<usize>,
}

fn d_encoder() -> Vec<usize> {
    vec![32, 64, 128]
}
fn d_post() -> Vec<usize> {
    vec![128, 64]
}
fn d_head() -> Vec<usize> {
    vec![64, 64]
}

impl Default for ModelWidths {
    fn default() -> Self {
        ModelWidths { encoder: d_encoder(), post: d_post(), head: d_head() }
    }
}

impl ModelWidths {
    pub fn to_model_config(&self, n_classes: usize) -> ModelConfig {
        ModelConfig {
            encoder_widths: self.encoder.clone(),
            post_widths: self.post.clone(),
            head_widths: self.head.clone(),
            n_classes,
        }
    }
}

/// Run hyperparameters. Every field has a default so partial JSON configs
/// work; the resolved struct is what lands in manifests and checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "d_one")]
    pub lambda1: f64,
    #[serde(default = "d_one")]
    pub lambda2: f64,
    #[serde(default = "d_one")]
    pub lambda3_base: f64,
    #[serde(default = "d_warm")]
    pub warm_frac: f64,
    /// M: distinguishing points per scene.
    #[serde(default = "d_select")]
    pub select_count: usize,
    /// k: same-label neighbors per distinguishing point.
    #[serde(default = "d_k")]
    pub neighbor_k: usize,
    #[serde(default = "d_cos_eps")]
    pub cos_eps: f64,
    #[serde(default = "d_descriptor_loss")]
    pub descriptor_loss: DescriptorLossVariant,
    /// Divide each neighborhood's cosine sum by its size (keeps the region
    /// loss in [−1, 1]); false divides by the selected count only.
    #[serde(default = "d_true")]
    pub rsl_per_neighbor_norm: bool,
    #[serde(default = "d_selection")]
    pub selection: SelectionStrategy,
    #[serde(default)]
    pub freeze_centers: bool,
    /// Feature toggle: descriptor head + probability masking.
    #[serde(default = "d_true")]
    pub scene_encoder: bool,
    /// Feature toggle: region similarity loss.
    #[serde(default = "d_true")]
    pub rsl: bool,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Debug: threshold the descriptor before masking at evaluation.
    #[serde(default)]
    pub binarize_tau: Option<f64>,
    #[serde(default)]
    pub model: ModelWidths,
}

fn d_epochs() -> usize {
    15
}
fn d_batch() -> usize {
    8
}
fn d_lr() -> f64 {
    1e-3
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_adam_eps() -> f64 {
    1e-8
}
fn d_one() -> f64 {
    1.0
}
fn d_warm() -> f64 {
    0.3
}
fn d_select() -> usize {
    32
}
fn d_k() -> usize {
    8
}
fn d_cos_eps() -> f64 {
    1e-8
}
fn d_descriptor_loss() -> DescriptorLossVariant {
    DescriptorLossVariant::FullBce
}
fn d_selection() -> SelectionStrategy {
    SelectionStrategy::TopConfidence
}
fn d_true() -> bool {
    true
}
fn d_seed() -> u64 {
    42
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are total")
    }
}

impl TrainConfig {
    fn adam_hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            scene_encoder: self.scene_encoder,
            stop_gradient: true,
            descriptor_override: None,
            binarize_tau: self.binarize_tau,
        }
    }

    fn region_options(&self) -> RegionLossOptions {
        RegionLossOptions {
            k: self.neighbor_k,
            eps: self.cos_eps,
            per_neighbor_norm: self.rsl_per_neighbor_norm,
            freeze_centers: self.freeze_centers,
        }
    }
}

/// One epoch's aggregate losses and validation metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lambda3: f64,
    pub train_total: f64,
    pub train_cls: f64,
    pub train_des: f64,
    pub train_rs: f64,
    pub val_miou: f64,
    pub val_descriptor_f1: f64,
    pub val_noise: f64,
}

/// Final state plus the best-validation snapshot.
#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
    pub best_epoch: usize,
}

const TAG_INIT: u64 = 0x12_17;
const TAG_SHUFFLE: u64 = 0x52f1;
const TAG_SELECT: u64 = 0x5e1e;

fn check_finite(value: f64, term: &'static str, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFiniteLoss { epoch, batch, term })
    }
}

/// Run the full training loop on the dataset's train split, validating each
/// epoch. Deterministic in (config, dataset): batches, selection seeds, and
/// gradient accumulation all run in fixed order.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome, TrainError> {
    let train_idx = dataset.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::MissingSplit(Split::Train));
    }
    let val_idx = dataset.indices(Split::Val);
    if val_idx.is_empty() {
        return Err(TrainError::MissingSplit(Split::Val));
    }

    let normalized: Vec<PointCloud> =
        dataset.clouds.iter().map(|c| c.normalized_to_unit_cube()).collect();
    let val_clouds: Vec<&PointCloud> = val_idx.iter().map(|&i| &normalized[i]).collect();

    let model_cfg = config.model.to_model_config(dataset.n_classes);
    let mut params = ModelParams::init(&model_cfg, seeding::mix(config.seed, TAG_INIT));
    let mut adam = AdamState::zeros_like(&params);
    let hp = config.adam_hyper();
    let n_classes = dataset.n_classes;

    let mut history: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, ModelParams, AdamState)> = None;
    let mut best_miou = f64::NEG_INFINITY;

    let param_shapes: Vec<[usize; 2]> = params.named().iter().map(|(_, a)| a.shape()).collect();

    for epoch in 0..config.epochs {
        let lambda3 = if config.rsl {
            lambda3_schedule(epoch, config.epochs, config.lambda3_base, config.warm_frac)
        } else {
            0.0
        };

        let mut order = train_idx.clone();
        let mut shuffle_rng =
            seeding::rng_from(seeding::mix_all(config.seed, &[TAG_SHUFFLE, epoch as u64]));
        order.shuffle(&mut shuffle_rng);

        let mut sums = (0.0, 0.0, 0.0, 0.0); // total, cls, des, rs
        let mut seen = 0usize;

        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut grad_sum: Vec<Array> =
                param_shapes.iter().map(|s| Array::zeros(s[0], s[1])).collect();

            for (within, &cloud_i) in chunk.iter().enumerate() {
                let cloud = &normalized[cloud_i];
                let labels = cloud.labels.as_ref().ok_or(TrainError::UnlabeledCloud)?;

                let mut fp = forward_full(cloud, &params, &config.forward_options());
                let g = &mut fp.graph;

                let cls = cls_loss(g, fp.refined, labels, n_classes);
                let mut terms = vec![(cls, config.lambda1)];

                let mut des_value = 0.0;
                if config.scene_encoder {
                    let truth = ground_truth_descriptor(labels, n_classes)?;
                    let des = descriptor_loss(g, fp.descriptor, &truth, config.descriptor_loss);
                    des_value = g.value(des).scalar_value();
                    terms.push((des, config.lambda2));
                }

                let mut rs_value = 0.0;
                if config.rsl {
                    let sel_seed = seeding::mix_all(
                        config.seed,
                        &[TAG_SELECT, epoch as u64, batch_idx as u64, within as u64],
                    );
                    let selected = select_distinguishing(
                        g.value(fp.refined),
                        labels,
                        config.select_count,
                        config.selection,
                        sel_seed,
                    );
                    let rs = region_similarity_loss(
                        g,
                        fp.point_features,
                        cloud,
                        &selected,
                        &config.region_options(),
                    );
                    rs_value = g.value(rs).scalar_value();
                    terms.push((rs, lambda3));
                }

                let total = total_loss(g, &terms);
                let cls_value = g.value(terms[0].0).scalar_value();
                let total_value = g.value(total).scalar_value();
                check_finite(cls_value, "cls", epoch, batch_idx)?;
                check_finite(des_value, "descriptor", epoch, batch_idx)?;
                check_finite(rs_value, "region", epoch, batch_idx)?;
                check_finite(total_value, "total", epoch, batch_idx)?;

                sums.0 += total_value;
                sums.1 += cls_value;
                sums.2 += des_value;
                sums.3 += rs_value;
                seen += 1;

                let grads = g.backward(total);
                for (slot, (_, id)) in grad_sum.iter_mut().zip(&fp.params.flat) {
                    if let Some(grad) = grads.get(*id) {
                        for (acc, v) in slot.data_mut().iter_mut().zip(grad.data()) {
                            *acc += v;
                        }
                    }
                }
            }

            let inv = 1.0 / chunk.len() as f64;
            for slot in grad_sum.iter_mut() {
                for v in slot.data_mut() {
                    *v *= inv;
                }
            }
            apply_updates(&mut params, &grad_sum, &mut adam, &hp);
        }

        let report = evaluate_clouds(&params, config, &val_clouds, n_classes)?;
        let denom = seen.max(1) as f64;
        let record = EpochRecord {
            epoch,
            lambda3,
            train_total: sums.0 / denom,
            train_cls: sums.1 / denom,
            train_des: sums.2 / denom,
            train_rs: sums.3 / denom,
            val_miou: report.iou.miou,
            val_descriptor_f1: report.descriptor.micro.f1,
            val_noise: report.noise,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (cls {:.4} des {:.4} rs {:.4}) | val mIoU {:.4} descF1 {:.4} noise {:.4}",
            record.train_total,
            record.train_cls,
            record.train_des,
            record.train_rs,
            record.val_miou,
            record.val_descriptor_f1,
            record.val_noise
        );
        if record.val_miou > best_miou {
            best_miou = record.val_miou;
            best = Some((epoch, params.clone(), adam.clone()));
        }
        history.push(record);
    }

    let (best_epoch, best_params, best_adam) = best.expect("at least one epoch ran");
    let best_checkpoint = Checkpoint {
        config: config.clone(),
        params: best_params,
        adam: best_adam,
        history: history[..=best_epoch].to_vec(),
    };
    let final_checkpoint = Checkpoint { config: config.clone(), params, adam, history };
    Ok(TrainOutcome { final_checkpoint, best_checkpoint, best_epoch })
}

/// Evaluation summary over one split.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub pooled: ConfusionMatrix,
    pub per_template: Vec<(String, ConfusionMatrix)>,
    pub iou: IouReport,
    pub descriptor: DescriptorReport,
    /// Mean noise score over clouds (k = EVAL_NOISE_K).
    pub noise: f64,
    pub scene_encoder_active: bool,
}

impl EvalReport {
    /// One row per class plus summary rows, as `kind,key,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,key,value\n");
        for (class, iou) in self.iou.per_class.iter().enumerate() {
            match iou {
                Some(v) => out.push_str(&format!("class,{class},{v}\n")),
                None => out.push_str(&format!("class,{class},NA\n")),
            }
        }
        out.push_str(&format!("summary,miou,{}\n", self.iou.miou));
        out.push_str(&format!("summary,mciou,{}\n", self.iou.mciou));
        out.push_str(&format!("summary,descriptor_precision,{}\n", self.descriptor.micro.precision));
        out.push_str(&format!("summary,descriptor_recall,{}\n", self.descriptor.micro.recall));
        out.push_str(&format!("summary,descriptor_f1,{}\n", self.descriptor.micro.f1));
        out.push_str(&format!("summary,noise_score,{}\n", self.noise));
        out.push_str(&format!(
            "summary,scene_encoder,{}\n",
            if self.scene_encoder_active { "active" } else { "bypassed" }
        ));
        out
    }
}

/// Forward-only evaluation. Predictions are the row argmax of the refined
/// map computed with the *predicted* descriptor; ground-truth descriptors
/// are used only to score descriptor quality, never to mask.
pub fn evaluate_clouds(
    params: &ModelParams,
    config: &TrainConfig,
    clouds: &[&PointCloud],
    n_classes: usize,
) -> Result<EvalReport, TrainError> {
    assert!(!clouds.is_empty(), "evaluate needs at least one cloud");
    let mut pooled = ConfusionMatrix::new(n_classes);
    let mut per_template: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    let mut desc_pred = Vec::new();
    let mut desc_truth = Vec::new();
    let mut noise_sum = 0.0;
    let opts = config.forward_options();

    for cloud in clouds {
        let labels = cloud.labels.as_ref().ok_or(TrainError::UnlabeledCloud)?;
        let fp = forward_full(cloud, params, &opts);
        let preds = fp.graph.value(fp.refined).row_argmax();
        pooled.record_all(labels, &preds);
        let template = cloud.scene_type.clone().unwrap_or_else(|| "unknown".to_string());
        per_template
            .entry(template)
            .or_insert_with(|| ConfusionMatrix::new(n_classes))
            .record_all(labels, &preds);
        desc_pred.push(fp.graph.value(fp.descriptor).clone());
        desc_truth.push(ground_truth_descriptor(labels, n_classes)?);
        noise_sum += noise_score(cloud, &preds, EVAL_NOISE_K);
    }

    let per_template: Vec<(String, ConfusionMatrix)> = per_template.into_iter().collect();
    let iou = iou_report(&pooled, &per_template);
    let descriptor = descriptor_f1(&desc_pred, &desc_truth, EVAL_DESCRIPTOR_TAU);
    Ok(EvalReport {
        pooled,
        per_template,
        iou,
        descriptor,
        noise: noise_sum / clouds.len() as f64,
        scene_encoder_active: config.scene_encoder,
    })
}

/// Evaluate a checkpoint on one split of a dataset.
pub fn evaluate(
    ckpt: &Checkpoint,
    dataset: &Dataset,
    split: Split,
) -> Result<EvalReport, TrainError> {
    if ckpt.n_classes() != dataset.n_classes {
        return Err(TrainError::ClassCountMismatch {
            checkpoint: ckpt.n_classes(),
            dataset: dataset.n_classes,
        });
    }
    let idx = dataset.indices(split);
    if idx.is_empty() {
        return Err(TrainError::MissingSplit(split));
    }
    let normalized: Vec<PointCloud> =
        idx.iter().map(|&i| dataset.clouds[i].normalized_to_unit_cube()).collect();
    let refs: Vec<&PointCloud> = normalized.iter().collect();
    evaluate_clouds(&ckpt.params, &ckpt.config, &refs, dataset.n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_benchmark, DataConfig};

    fn tiny_widths() -> ModelWidths {
        ModelWidths { encoder: vec![8, 16], post: vec![16, 8], head: vec![8, 8] }
    }

    fn tiny_dataset(seed: u64) -> Dataset {
        let cfg = DataConfig {
            train_scenes: 4,
            val_scenes: 2,
            test_scenes: 2,
            points_per_scene: 120,
            ..DataConfig::default()
        };
        build_benchmark(&cfg, seed).unwrap()
    }

    fn tiny_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 2,
            select_count: 8,
            neighbor_k: 4,
            model: tiny_widths(),
            ..TrainConfig::default()
        }
    }

    fn param_bits(p: &ModelParams) -> Vec<u64> {
        p.named()
            .iter()
            .flat_map(|(_, a)| a.data().iter().map(|v| v.to_bits()))
            .collect()
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(1);
        let cfg = tiny_config(2);
        let a = train(&cfg, &ds).unwrap();
        let b = train(&cfg, &ds).unwrap();
        assert_eq!(a.final_checkpoint.history, b.final_checkpoint.history);
        assert_eq!(
            param_bits(&a.final_checkpoint.params),
            param_bits(&b.final_checkpoint.params)
        );
    }

    #[test]
    fn losses_decrease_on_a_tiny_run() {
        let ds = tiny_dataset(2);
        let cfg = tiny_config(8);
        let out = train(&cfg, &ds).unwrap();
        let h = &out.final_checkpoint.history;
        assert!(h.last().unwrap().train_cls < h.first().unwrap().train_cls);
    }

    #[test]
    fn zero_lambda2_freezes_the_scene_head() {
        let ds = tiny_dataset(3);
        let cfg = TrainConfig { lambda2: 0.0, ..tiny_config(2) };
        let out = train(&cfg, &ds).unwrap();
        let init = ModelParams::init(
            &cfg.model.to_model_config(ds.n_classes),
            seeding::mix(cfg.seed, TAG_INIT),
        );
        for ((name, trained), (_, fresh)) in
            out.final_checkpoint.params.named().iter().zip(init.named().iter())
        {
            if name.starts_with("scene_head") {
                assert_eq!(
                    trained.data(), fresh.data(),
                    "{name} must not move when the descriptor loss weight is zero"
                );
            } else if name.starts_with("encoder") {
                assert_ne!(trained.data(), fresh.data(), "{name} should train");
            }
        }
    }

    #[test]
    fn toggles_off_reduce_total_to_cls() {
        let ds = tiny_dataset(4);
        let cfg = TrainConfig { scene_encoder: false, rsl: false, ..tiny_config(1) };
        let out = train(&cfg, &ds).unwrap();
        for r in &out.final_checkpoint.history {
            assert_eq!(r.train_des, 0.0);
            assert_eq!(r.train_rs, 0.0);
            assert!((r.train_total - r.train_cls).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_after_train_matches_last_history_row() {
        let ds = tiny_dataset(5);
        let cfg = tiny_config(2);
        let out = train(&cfg, &ds).unwrap();
        let report = evaluate(&out.final_checkpoint, &ds, Split::Val).unwrap();
        let last = out.final_checkpoint.history.last().unwrap();
        assert_eq!(report.iou.miou.to_bits(), last.val_miou.to_bits());
        assert_eq!(report.descriptor.micro.f1.to_bits(), last.val_descriptor_f1.to_bits());
        assert_eq!(report.noise.to_bits(), last.val_noise.to_bits());
    }

    #[test]
    fn checkpoint_reload_reproduces_metrics() {
        let ds = tiny_dataset(6);
        let cfg = tiny_config(2);
        let out = train(&cfg, &ds).unwrap();
        let path = std::env::temp_dir().join(format!("sceneenc_trainer_{}.bin", std::process::id()));
        save_checkpoint(&out.final_checkpoint, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let a = evaluate(&out.final_checkpoint, &ds, Split::Val).unwrap();
        let b = evaluate(&loaded, &ds, Split::Val).unwrap();
        assert_eq!(a.iou.miou.to_bits(), b.iou.miou.to_bits());
        assert_eq!(a.noise.to_bits(), b.noise.to_bits());
        let _ = std::fs::remove_file(path);
    }

    #[test]
    fn scene_encoder_off_reports_bypassed() {
        let ds = tiny_dataset(7);
        let cfg = TrainConfig { scene_encoder: false, ..tiny_config(1) };
        let out = train(&cfg, &ds).unwrap();
        let report = evaluate(&out.final_checkpoint, &ds, Split::Test).unwrap();
        assert!(!report.scene_encoder_active);
        assert!(report.to_csv().contains("scene_encoder,bypassed"));
    }

    #[test]
    fn class_count_mismatch_is_rejected() {
        let ds = tiny_dataset(8);
        let cfg = tiny_config(1);
        let out = train(&cfg, &ds).unwrap();
        let mut other = tiny_dataset(8);
        other.n_classes = 12;
        let err = evaluate(&out.final_checkpoint, &other, Split::Val).unwrap_err();
        assert!(matches!(err, TrainError::ClassCountMismatch { checkpoint: 8, dataset: 12 }));
    }

    #[test]
    fn runaway_parameters_abort_with_term_name() {
        // an absurd learning rate overflows the features after one update;
        // the clamped log keeps cls finite, so the region term trips first
        let ds = tiny_dataset(9);
        let cfg = TrainConfig { learning_rate: 1e200, ..tiny_config(2) };
        let err = train(&cfg, &ds).unwrap_err();
        match err {
            TrainError::NonFiniteLoss { term, .. } => assert_eq!(term, "region"),
            other => panic!("expected non-finite abort, got {other}"),
        }
    }

    #[test]
    fn untrained_model_scores_near_chance() {
        let ds = tiny_dataset(10);
        let cfg = tiny_config(1);
        let model_cfg = cfg.model.to_model_config(ds.n_classes);
        let params = ModelParams::init(&model_cfg, 1234);
        let clouds = ds.clouds_of(Split::Train);
        let normalized: Vec<PointCloud> =
            clouds.iter().map(|c| c.normalized_to_unit_cube()).collect();
        let refs: Vec<&PointCloud> = normalized.iter().collect();
        let report = evaluate_clouds(&params, &cfg, &refs, ds.n_classes).unwrap();
        assert!(
            report.iou.miou < 2.0 / ds.n_classes as f64 + 0.1,
            "untrained mIoU {} suspiciously high",
            report.iou.miou
        );
    }
}
