//! Run configuration: one JSON document, overridable from the command line.

use std::path::{Path, PathBuf};

use migate_core::corrupt::{NoiseKind, TextOp};
use migate_core::gate::{hash_seed, GateConfig};
use migate_core::pid::EstimatorConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Feature table (`.mifs`).
    pub table: Option<PathBuf>,
    /// Text manifest JSONL with `sample_id`, `text` and optional `caption`.
    pub manifest: Option<PathBuf>,
    /// Decomposition CSV written by `estimate`.
    pub decomposition: Option<PathBuf>,
    /// Caption JSONL with `sample_id` and either `caption` or `error`.
    pub captions: Option<PathBuf>,
    /// Directory of PNG images to corrupt.
    pub images: Option<PathBuf>,
    /// Text manifest whose `text` fields are corrupted.
    pub texts: Option<PathBuf>,
    /// Response log JSONL.
    pub responses: Option<PathBuf>,
    /// Response log of the reference model for the comparison row.
    pub baseline_responses: Option<PathBuf>,
    /// JSON with `p_clean` and a list of `{kind, level, accuracy}` cells.
    pub accuracies: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    NgramCosine,
    /// Accepts every candidate; useful for exercising the loop.
    AcceptAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub image_kinds: Vec<NoiseKind>,
    pub image_levels: Vec<u8>,
    pub text_ops: Vec<TextOp>,
    pub text_levels: Vec<u8>,
    pub similarity: Similarity,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            image_kinds: NoiseKind::ALL.to_vec(),
            image_levels: (1..=5).collect(),
            text_ops: TextOp::ALL.to_vec(),
            text_levels: (1..=5).collect(),
            similarity: Similarity::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Labels for the comparison row.
    pub model: String,
    pub rate: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub estimator: EstimatorConfig,
    pub gate: GateConfig,
    pub corruption: CorruptionConfig,
    pub metrics: MetricsConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            estimator: EstimatorConfig::default(),
            gate: GateConfig::default(),
            corruption: CorruptionConfig::default(),
            metrics: MetricsConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Seed of a named component, derived from the run seed so components
    /// can be rerun independently.
    pub fn sub_seed(&self, name: &str) -> u64 {
        hash_seed(name, &format!("{}:", self.seed))
    }

    /// Estimator settings with both training seeds taken from the
    /// `estimator` sub-seed.
    pub fn seeded_estimator(&self) -> EstimatorConfig {
        self.estimator.clone().with_seed(self.sub_seed("estimator"))
    }

    pub fn validate(&self) -> Result<()> {
        self.estimator.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.gate.validate().map_err(|e| Error::Config(e.to_string()))?;
        let bad_image = self.corruption.image_levels.iter().find(|&&l| !(1..=10).contains(&l));
        let bad_text = self.corruption.text_levels.iter().find(|&&l| !(1..=5).contains(&l));
        if let Some(l) = bad_image {
            return Err(Error::Config(format!("image level {l} is outside 1..=10")));
        }
        if let Some(l) = bad_text {
            return Err(Error::Config(format!("text level {l} is outside 1..=5")));
        }
        Ok(())
    }
}
