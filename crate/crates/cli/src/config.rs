use std::path::Path;

use serde::{Deserialize, Serialize};

use sceneenc::data::DataConfig;
use sceneenc::trainer::TrainConfig;

use crate::CliError;

fn d_ablation_seeds() -> usize {
    5
}

/// Top-level run configuration. Every field (and every nested field) has a
/// default, so `{}` or an absent file resolves to the standard benchmark;
/// the fully resolved struct is what gets written into run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Seeds per ablation cell.
    #[serde(default = "d_ablation_seeds")]
    pub ablation_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            train: TrainConfig::default(),
            ablation_seeds: d_ablation_seeds(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("config {}: {e}", p.display()))
                })
            }
        }
    }

    /// Apply command-line overrides. `--seed` steers both generation and
    /// training; `--paper-exact` selects the strict published formulation of
    /// the descriptor loss (present classes only) and the region loss
    /// normalization (divide by the selected count only).
    pub fn apply_overrides(&mut self, seed: Option<u64>, paper_exact: bool) {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        if paper_exact {
            self.train.descriptor_loss = sceneenc::losses::DescriptorLossVariant::PresentOnly;
            self.train.rsl_per_neighbor_norm = false;
        }
    }
}
