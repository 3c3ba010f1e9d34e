//! Synthetic labeled scenes and dataset plumbing.
//!
//! Scenes are built from parametric object blobs placed on a jittered,
//! shuffled grid so objects never interpenetrate and generation is a pure
//! function of (template, point count, seed). The default benchmark carries
//! a confusable class pair: two classes with identical local geometry that
//! never share a scene, so only scene-level context can tell them apart.

mod gen;
mod io;

pub use gen::{generate_scene, BlobShape, ObjectGenerator, SceneTemplate, SizeRange};
pub use io::{load_cloud, load_dataset, save_cloud, save_dataset, DATASET_MANIFEST};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::seeding;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("scene needs at least {min_required} points for this palette, got {got}")]
    TooFewPoints { min_required: usize, got: usize },
    #[error("{path}:{line}: malformed row: {reason}")]
    MalformedRow { path: String, line: usize, reason: String },
    #[error("{path}:{line}: label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { path: String, line: usize, label: usize, n_classes: usize },
    #[error("unsupported point-cloud file extension: {path} (expected .csv)")]
    UnknownExtension { path: String },
    #[error("dataset manifest not found in {dir}")]
    MissingManifest { dir: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Generation settings for a benchmark. The defaults are the standard
/// desk-scale benchmark: 8 classes, two room templates with one confusable
/// pair (classes 6 and 7), 200/50/50 scenes of 512 points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_points")]
    pub points_per_scene: usize,
    #[serde(default = "default_train")]
    pub train_scenes: usize,
    #[serde(default = "default_val")]
    pub val_scenes: usize,
    #[serde(default = "default_test")]
    pub test_scenes: usize,
    #[serde(default = "gen::default_templates")]
    pub templates: Vec<SceneTemplate>,
    /// Two classes with identical blob geometry that never co-occur.
    #[serde(default = "default_confusable")]
    pub confusable_pair: Option<(usize, usize)>,
    /// Documented bounds on per-class point frequency over the train split;
    /// checked by the generation tests.
    #[serde(default = "default_min_fraction")]
    pub min_class_fraction: f64,
    #[serde(default = "default_max_fraction")]
    pub max_class_fraction: f64,
}

fn default_n_classes() -> usize {
    8
}
fn default_points() -> usize {
    512
}
fn default_train() -> usize {
    200
}
fn default_val() -> usize {
    50
}
fn default_test() -> usize {
    50
}
fn default_confusable() -> Option<(usize, usize)> {
    Some((6, 7))
}
fn default_min_fraction() -> f64 {
    0.01
}
fn default_max_fraction() -> f64 {
    0.6
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_classes: default_n_classes(),
            points_per_scene: default_points(),
            train_scenes: default_train(),
            val_scenes: default_val(),
            test_scenes: default_test(),
            templates: gen::default_templates(),
            confusable_pair: default_confusable(),
            min_class_fraction: default_min_fraction(),
            max_class_fraction: default_max_fraction(),
        }
    }
}

impl DataConfig {
    pub fn total_scenes(&self) -> usize {
        self.train_scenes + self.val_scenes + self.test_scenes
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |field: &'static str, reason: String| DataError::InvalidConfig { field, reason };
        if self.n_classes == 0 {
            return Err(bad("n_classes", "must be at least 1".into()));
        }
        if self.templates.len() < 2 {
            return Err(bad("templates", format!("need at least 2, got {}", self.templates.len())));
        }
        if self.train_scenes == 0 || self.val_scenes == 0 {
            return Err(bad("train_scenes", "need non-empty train and val splits".into()));
        }
        for t in &self.templates {
            if t.objects.is_empty() {
                return Err(bad("templates", format!("template {} has no objects", t.name)));
            }
            for obj in &t.objects {
                if obj.class_id >= self.n_classes {
                    return Err(bad(
                        "templates",
                        format!("template {} uses class {} >= n_classes {}", t.name, obj.class_id, self.n_classes),
                    ));
                }
            }
            let min_points = 10 * t.palette().len();
            if self.points_per_scene < min_points {
                return Err(bad(
                    "points_per_scene",
                    format!("{} is below 10x palette size {min_points}", self.points_per_scene),
                ));
            }
        }
        // at least one template pair must share a non-confusable class
        let confusable = self.confusable_pair;
        let shares_plain = |a: &SceneTemplate, b: &SceneTemplate| {
            a.palette().iter().any(|c| {
                b.palette().contains(c)
                    && confusable.map_or(true, |(x, y)| *c != x && *c != y)
            })
        };
        let any_shared = self
            .templates
            .iter()
            .enumerate()
            .any(|(i, a)| self.templates.iter().skip(i + 1).any(|b| shares_plain(a, b)));
        if !any_shared {
            return Err(bad("templates", "no two templates share a non-confusable class".into()));
        }
        match confusable {
            None => {
                return Err(bad("confusable_pair", "benchmark requires a confusable pair".into()));
            }
            Some((a, b)) => {
                if a >= self.n_classes || b >= self.n_classes || a == b {
                    return Err(bad("confusable_pair", format!("bad pair ({a}, {b})")));
                }
                let holders = |class: usize| -> Vec<&SceneTemplate> {
                    self.templates.iter().filter(|t| t.palette().contains(&class)).collect()
                };
                let (ha, hb) = (holders(a), holders(b));
                if ha.is_empty() || hb.is_empty() {
                    return Err(bad("confusable_pair", "both classes must appear in some template".into()));
                }
                for t in &self.templates {
                    let p = t.palette();
                    if p.contains(&a) && p.contains(&b) {
                        return Err(bad(
                            "confusable_pair",
                            format!("classes {a} and {b} co-occur in template {}", t.name),
                        ));
                    }
                }
                // the pair must be geometrically indistinguishable
                let shape_of = |class: usize| {
                    self.templates
                        .iter()
                        .flat_map(|t| &t.objects)
                        .find(|o| o.class_id == class)
                        .map(|o| (&o.shape, &o.z_range))
                };
                if shape_of(a) != shape_of(b) {
                    return Err(bad(
                        "confusable_pair",
                        format!("classes {a} and {b} use different blob generators"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Generated benchmark: clouds plus a deterministic split assignment.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub clouds: Vec<PointCloud>,
    pub n_classes: usize,
    pub splits: Vec<Split>,
    pub template_names: Vec<String>,
}

impl Dataset {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn clouds_of(&self, split: Split) -> Vec<&PointCloud> {
        self.indices(split).into_iter().map(|i| &self.clouds[i]).collect()
    }
}

const TAG_TEMPLATE_PICK: u64 = 0x7e3a_11;
const TAG_SCENE: u64 = 0x5ce_e0;
const TAG_SPLIT: u64 = 0x59_17;

/// Generate the whole benchmark deterministically from (config, seed).
pub fn build_benchmark(config: &DataConfig, seed: u64) -> Result<Dataset, DataError> {
    use rand::Rng;
    config.validate()?;
    let total = config.total_scenes();
    let mut pick_rng = seeding::rng_from(seeding::mix(seed, TAG_TEMPLATE_PICK));
    let mut clouds = Vec::with_capacity(total);
    for i in 0..total {
        let template = &config.templates[pick_rng.gen_range(0..config.templates.len())];
        let scene_seed = seeding::mix_all(seed, &[TAG_SCENE, i as u64]);
        clouds.push(generate_scene(template, config.points_per_scene, scene_seed)?);
    }

    let mut order: Vec<usize> = (0..total).collect();
    {
        use rand::seq::SliceRandom;
        let mut split_rng = seeding::rng_from(seeding::mix(seed, TAG_SPLIT));
        order.shuffle(&mut split_rng);
    }
    let mut splits = vec![Split::Test; total];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < config.train_scenes {
            Split::Train
        } else if rank < config.train_scenes + config.val_scenes {
            Split::Val
        } else {
            Split::Test
        };
    }

    Ok(Dataset {
        clouds,
        n_classes: config.n_classes,
        splits,
        template_names: config.templates.iter().map(|t| t.name.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::ground_truth_descriptor;

    fn small_config() -> DataConfig {
        DataConfig {
            train_scenes: 6,
            val_scenes: 2,
            test_scenes: 2,
            ..DataConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = build_benchmark(&cfg, 31).unwrap();
        let b = build_benchmark(&cfg, 31).unwrap();
        assert_eq!(a.clouds.len(), b.clouds.len());
        for (ca, cb) in a.clouds.iter().zip(&b.clouds) {
            assert_eq!(ca.scene_type, cb.scene_type);
            assert_eq!(ca.labels, cb.labels);
            let (da, db) = (ca.coords.data(), cb.coords.data());
            assert!(da.iter().zip(db).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let c = build_benchmark(&cfg, 32).unwrap();
        assert!(a.clouds[0].coords.data() != c.clouds[0].coords.data());
    }

    #[test]
    fn default_benchmark_shape() {
        let cfg = DataConfig::default();
        let ds = build_benchmark(&cfg, 7).unwrap();
        assert_eq!(ds.clouds.len(), 300);
        assert_eq!(ds.indices(Split::Train).len(), 200);
        assert_eq!(ds.indices(Split::Val).len(), 50);
        assert_eq!(ds.indices(Split::Test).len(), 50);
        for cloud in &ds.clouds {
            assert_eq!(cloud.len(), 512);
        }
    }

    #[test]
    fn descriptors_match_template_palettes() {
        let cfg = small_config();
        let ds = build_benchmark(&cfg, 11).unwrap();
        for cloud in &ds.clouds {
            let labels = cloud.labels.as_ref().unwrap();
            let desc = ground_truth_descriptor(labels, cfg.n_classes).unwrap();
            let template = cfg
                .templates
                .iter()
                .find(|t| Some(&t.name) == cloud.scene_type.as_ref())
                .unwrap();
            let palette = template.palette();
            for class in 0..cfg.n_classes {
                let expected = if palette.contains(&class) { 1.0 } else { 0.0 };
                assert_eq!(desc.get(0, class), expected, "class {class} in {}", template.name);
            }
        }
    }

    #[test]
    fn confusable_classes_never_co_occur() {
        let cfg = small_config();
        let (a, b) = cfg.confusable_pair.unwrap();
        let ds = build_benchmark(&cfg, 13).unwrap();
        for cloud in &ds.clouds {
            let labels = cloud.labels.as_ref().unwrap();
            let has_a = labels.contains(&a);
            let has_b = labels.contains(&b);
            assert!(!(has_a && has_b));
            assert!(has_a || has_b, "every default template holds one of the pair");
        }
    }

    #[test]
    fn train_class_frequencies_within_bounds() {
        let cfg = DataConfig { train_scenes: 40, val_scenes: 5, test_scenes: 5, ..DataConfig::default() };
        let ds = build_benchmark(&cfg, 17).unwrap();
        let mut counts = vec![0usize; cfg.n_classes];
        let mut total = 0usize;
        for &i in &ds.indices(Split::Train) {
            for &l in ds.clouds[i].labels.as_ref().unwrap() {
                counts[l] += 1;
                total += 1;
            }
        }
        for (class, &c) in counts.iter().enumerate() {
            let f = c as f64 / total as f64;
            // the confusable classes each appear in only one template, so
            // their floor is half the configured bound
            let lo = if cfg.confusable_pair.map_or(false, |(a, b)| class == a || class == b) {
                cfg.min_class_fraction / 2.0
            } else {
                cfg.min_class_fraction
            };
            assert!(f >= lo && f <= cfg.max_class_fraction, "class {class} frequency {f}");
        }
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let mut cfg = DataConfig::default();
        cfg.confusable_pair = None;
        let err = build_benchmark(&cfg, 1).unwrap_err();
        assert!(err.to_string().contains("confusable_pair"), "{err}");

        let mut cfg = DataConfig::default();
        cfg.templates.truncate(1);
        let err = build_benchmark(&cfg, 1).unwrap_err();
        assert!(err.to_string().contains("templates"), "{err}");

        let mut cfg = DataConfig::default();
        cfg.points_per_scene = 20;
        let err = build_benchmark(&cfg, 1).unwrap_err();
        assert!(err.to_string().contains("points_per_scene"), "{err}");
    }
}
