//! Point-cloud CSV files and the dataset manifest.
//!
//! One point per line, `x,y,z,label` (label optional for unlabeled input),
//! `#`-prefixed header lines ignored. Floats are written with Rust's
//! shortest-round-trip formatting, so save → load is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Split};
use crate::autodiff::Array;
use crate::geometry::PointCloud;

pub const DATASET_MANIFEST: &str = "dataset_manifest.json";

pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    check_extension(path)?;
    let mut out = String::new();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        match &cloud.labels {
            Some(labels) => {
                out.push_str(&format!("{},{},{},{}\n", p[0], p[1], p[2], labels[i]))
            }
            None => out.push_str(&format!("{},{},{}\n", p[0], p[1], p[2])),
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_cloud(path: &Path, n_classes: usize) -> Result<PointCloud, DataError> {
    check_extension(path)?;
    let text = fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut coords = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut arity: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line_display = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(DataError::MalformedRow {
                path: display,
                line: line_display,
                reason: format!("expected 3 or 4 comma-separated fields, got {}", fields.len()),
            });
        }
        match arity {
            None => arity = Some(fields.len()),
            Some(a) if a != fields.len() => {
                return Err(DataError::MalformedRow {
                    path: display,
                    line: line_display,
                    reason: format!("row has {} fields, earlier rows had {a}", fields.len()),
                });
            }
            _ => {}
        }
        for field in &fields[..3] {
            let v: f64 = field.parse().map_err(|_| DataError::MalformedRow {
                path: display.clone(),
                line: line_display,
                reason: format!("`{field}` is not a number"),
            })?;
            coords.push(v);
        }
        if fields.len() == 4 {
            let label: usize = fields[3].parse().map_err(|_| DataError::MalformedRow {
                path: display.clone(),
                line: line_display,
                reason: format!("`{}` is not a class id", fields[3]),
            })?;
            if label >= n_classes {
                return Err(DataError::LabelOutOfRange {
                    path: display,
                    line: line_display,
                    label,
                    n_classes,
                });
            }
            labels.push(label);
        }
    }
    if coords.is_empty() {
        return Err(DataError::MalformedRow {
            path: display,
            line: 0,
            reason: "file holds no points".to_string(),
        });
    }
    let n = coords.len() / 3;
    let coords = Array::from_vec(n, 3, coords);
    let labels = if labels.is_empty() { None } else { Some(labels) };
    Ok(PointCloud::new(coords, labels))
}

fn check_extension(path: &Path) -> Result<(), DataError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(()),
        _ => Err(DataError::UnknownExtension { path: path.display().to_string() }),
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestScene {
    file: String,
    split: Split,
    scene_type: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    n_classes: usize,
    templates: Vec<String>,
    scenes: Vec<ManifestScene>,
}

const MANIFEST_FORMAT: &str = "sceneenc-dataset-v1";

/// Write every cloud as `scene_NNN.csv` plus a manifest naming files,
/// split assignments, class count, and template names.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let mut scenes = Vec::new();
    for (i, cloud) in dataset.clouds.iter().enumerate() {
        let file = format!("scene_{i:04}.csv");
        save_cloud(cloud, &dir.join(&file))?;
        scenes.push(ManifestScene {
            file,
            split: dataset.splits[i],
            scene_type: cloud.scene_type.clone(),
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        n_classes: dataset.n_classes,
        templates: dataset.template_names.clone(),
        scenes,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(DATASET_MANIFEST), json)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let manifest_path = dir.join(DATASET_MANIFEST);
    if !manifest_path.exists() {
        return Err(DataError::MissingManifest { dir: dir.display().to_string() });
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let mut clouds = Vec::with_capacity(manifest.scenes.len());
    let mut splits = Vec::with_capacity(manifest.scenes.len());
    for scene in &manifest.scenes {
        let mut cloud = load_cloud(&dir.join(&scene.file), manifest.n_classes)?;
        cloud.scene_type = scene.scene_type.clone();
        clouds.push(cloud);
        splits.push(scene.split);
    }
    Ok(Dataset {
        clouds,
        n_classes: manifest.n_classes,
        splits,
        template_names: manifest.templates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_benchmark, DataConfig};

    fn tempdir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("sceneenc_io_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn cloud_round_trip_is_bit_exact() {
        let cfg = DataConfig { train_scenes: 1, val_scenes: 1, test_scenes: 0, ..DataConfig::default() };
        let ds = build_benchmark(&cfg, 3).unwrap();
        let dir = tempdir("roundtrip");
        let path = dir.join("cloud.csv");
        save_cloud(&ds.clouds[0], &path).unwrap();
        let loaded = load_cloud(&path, cfg.n_classes).unwrap();
        assert_eq!(loaded.labels, ds.clouds[0].labels);
        for (a, b) in loaded.coords.data().iter().zip(ds.clouds[0].coords.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn four_column_rows_parse() {
        let dir = tempdir("parse");
        let path = dir.join("one.csv");
        fs::write(&path, "# header\n0.1,0.2,0.3,5\n").unwrap();
        let cloud = load_cloud(&path, 6).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.point(0), [0.1, 0.2, 0.3]);
        assert_eq!(cloud.labels, Some(vec![5]));
    }

    #[test]
    fn label_out_of_range_names_the_line() {
        let dir = tempdir("badlabel");
        let path = dir.join("bad.csv");
        fs::write(&path, "0,0,0,1\n0,0,1,9\n").unwrap();
        let err = load_cloud(&path, 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:") && msg.contains("label 9"), "{msg}");
    }

    #[test]
    fn malformed_rows_name_the_line() {
        let dir = tempdir("malformed");
        let path = dir.join("bad.csv");
        fs::write(&path, "0,0,0\nnot,a,row,at,all\n").unwrap();
        let msg = load_cloud(&path, 4).unwrap_err().to_string();
        assert!(msg.contains(":2:"), "{msg}");

        fs::write(&path, "0,0,zero\n").unwrap();
        let msg = load_cloud(&path, 4).unwrap_err().to_string();
        assert!(msg.contains("`zero` is not a number"), "{msg}");
    }

    #[test]
    fn unknown_extension_rejected() {
        let dir = tempdir("ext");
        let path = dir.join("points.xyz");
        fs::write(&path, "0,0,0\n").unwrap();
        assert!(matches!(
            load_cloud(&path, 4),
            Err(DataError::UnknownExtension { .. })
        ));
    }

    #[test]
    fn dataset_round_trip_keeps_splits_and_types() {
        let cfg = DataConfig { train_scenes: 3, val_scenes: 2, test_scenes: 1, ..DataConfig::default() };
        let ds = build_benchmark(&cfg, 5).unwrap();
        let dir = tempdir("dataset");
        save_dataset(&ds, &dir).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded.n_classes, ds.n_classes);
        assert_eq!(loaded.splits, ds.splits);
        assert_eq!(loaded.template_names, ds.template_names);
        for (a, b) in loaded.clouds.iter().zip(&ds.clouds) {
            assert_eq!(a.scene_type, b.scene_type);
            assert_eq!(a.labels, b.labels);
        }
    }
}
