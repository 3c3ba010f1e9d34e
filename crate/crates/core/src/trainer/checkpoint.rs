//! Checkpoint files: a JSON header (config, shapes, step counter, metric
//! history) followed by a little-endian f64 payload for every named
//! parameter and both Adam moment sets, in `ModelParams::named()` order.
//! Everything is fixed-order, so identical runs write identical bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamState, EpochRecord, TrainConfig};
use crate::backbone::{ModelConfig, ModelParams};

pub const CHECKPOINT_FORMAT: &str = "sceneenc-checkpoint-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint file: {0}")]
    Format(String),
}

/// Serialized training state: parameters, optimizer moments, the config
/// that produced them, and the per-epoch metric history.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn n_classes(&self) -> usize {
        self.params.config.n_classes
    }
}

#[derive(Serialize, Deserialize)]
struct ParamMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    config: TrainConfig,
    model: ModelConfig,
    step: u64,
    history: Vec<EpochRecord>,
    params: Vec<ParamMeta>,
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let named = ckpt.params.named();
    let header = Header {
        format: CHECKPOINT_FORMAT.to_string(),
        config: ckpt.config.clone(),
        model: ckpt.params.config.clone(),
        step: ckpt.adam.step,
        history: ckpt.history.clone(),
        params: named
            .iter()
            .map(|(name, a)| ParamMeta { name: name.clone(), rows: a.shape()[0], cols: a.shape()[1] })
            .collect(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(header_json.len() + 16);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    let mut write_arrays = |arrays: &mut dyn Iterator<Item = &crate::autodiff::Array>| {
        for a in arrays {
            for v in a.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    };
    write_arrays(&mut named.iter().map(|(_, a)| *a));
    write_arrays(&mut ckpt.adam.m.iter());
    write_arrays(&mut ckpt.adam.v.iter());
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(CheckpointError::Format("file too short for a header".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + header_len {
        return Err(CheckpointError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[8..8 + header_len])?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Format(format!(
            "format tag `{}` (expected `{CHECKPOINT_FORMAT}`)",
            header.format
        )));
    }

    let mut params = ModelParams::zeros(&header.model);
    {
        let named = params.named_mut();
        if named.len() != header.params.len() {
            return Err(CheckpointError::Format(format!(
                "header lists {} parameters, model shape needs {}",
                header.params.len(),
                named.len()
            )));
        }
        for ((name, array), meta) in named.iter().zip(&header.params) {
            if *name != meta.name || array.shape() != [meta.rows, meta.cols] {
                return Err(CheckpointError::Format(format!(
                    "parameter {} [{} x {}] does not match model layout entry {name}",
                    meta.name, meta.rows, meta.cols
                )));
            }
        }
    }

    let total_values: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    let expected = 8 + header_len + 3 * total_values * 8;
    if bytes.len() != expected {
        return Err(CheckpointError::Format(format!(
            "payload is {} bytes, header declares {expected}",
            bytes.len()
        )));
    }

    let mut cursor = 8 + header_len;
    let mut read_into = |array: &mut crate::autodiff::Array| {
        for v in array.data_mut() {
            *v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
            cursor += 8;
        }
    };
    for (_, array) in params.named_mut() {
        read_into(array);
    }
    let mut adam = AdamState::zeros_like(&params);
    adam.step = header.step;
    for m in adam.m.iter_mut() {
        read_into(m);
    }
    for v in adam.v.iter_mut() {
        read_into(v);
    }

    Ok(Checkpoint { config: header.config, params, adam, history: header.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ModelConfig;

    #[test]
    fn round_trip_is_lossless() {
        let model = ModelConfig {
            encoder_widths: vec![4, 8],
            post_widths: vec![8, 4],
            head_widths: vec![4, 4],
            n_classes: 3,
        };
        let params = ModelParams::init(&model, 77);
        let mut adam = AdamState::zeros_like(&params);
        adam.step = 42;
        adam.m[0].data_mut()[0] = 0.25;
        adam.v[1].data_mut()[1] = 1e-9;
        let ckpt = Checkpoint {
            config: TrainConfig::default(),
            params,
            adam,
            history: vec![EpochRecord {
                epoch: 0,
                lambda3: 0.5,
                train_total: 1.25,
                train_cls: 1.0,
                train_des: 0.25,
                train_rs: -0.5,
                val_miou: 0.625,
                val_descriptor_f1: 0.9,
                val_noise: 0.03,
            }],
        };
        let path = std::env::temp_dir().join(format!("sceneenc_ckpt_{}.bin", std::process::id()));
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, ckpt);
        // identical state writes identical bytes
        let path2 = std::env::temp_dir().join(format!("sceneenc_ckpt2_{}.bin", std::process::id()));
        save_checkpoint(&loaded, &path2).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
        let _ = fs::remove_file(path);
        let _ = fs::remove_file(path2);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let path = std::env::temp_dir().join(format!("sceneenc_badfmt_{}.bin", std::process::id()));
        let fake = serde_json::json!({
            "format": "something-else",
            "config": TrainConfig::default(),
            "model": ModelConfig::with_classes(2),
            "step": 0,
            "history": [],
            "params": []
        });
        let body = serde_json::to_vec(&fake).unwrap();
        let mut bytes = (body.len() as u64).to_le_bytes().to_vec();
        bytes.extend(body);
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert!(err.to_string().contains("format tag"), "{err}");
        let _ = fs::remove_file(path);
    }
}
