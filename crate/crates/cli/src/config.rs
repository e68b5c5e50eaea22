use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use urban_lrp::dsp::{FeatureConfig, FeatureKind, IMAGE_SIDE};
use urban_lrp::lrp::{RulePlan, DEFAULT_ALPHA};
use urban_lrp::nn::{Architecture, NadamConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureName {
    Canonical,
    Reduced,
}

/// Flat JSON run configuration. Every key is optional; command-line flags
/// override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Audio root holding the `fold<k>/` directories.
    pub dataset: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub features: FeatureKind,
    pub rule: String,
    pub out: PathBuf,
    pub seed: u64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub class_weighting: bool,
    pub sample_rate: u32,
    pub duration: f64,
    pub image_size: usize,
    pub architecture: ArchitectureName,
    pub num_classes: usize,
    pub alpha: f64,
    /// Worker threads for feature extraction and explanation; 0 = all cores.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let features = FeatureConfig::default();
        Self {
            dataset: None,
            metadata: None,
            features: features.kind,
            rule: "flat".into(),
            out: PathBuf::from("out"),
            seed: 0,
            max_epochs: train.max_epochs,
            patience: train.patience,
            batch_size: train.batch_size,
            lr: train.optimizer.lr,
            beta1: train.optimizer.beta1,
            beta2: train.optimizer.beta2,
            epsilon: train.optimizer.eps,
            class_weighting: true,
            sample_rate: features.sample_rate,
            duration: features.duration,
            image_size: IMAGE_SIDE,
            architecture: ArchitectureName::Canonical,
            num_classes: 10,
            alpha: DEFAULT_ALPHA,
            workers: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn rule_plan(&self) -> Result<RulePlan> {
        self.rule.parse().with_context(|| format!("rule {:?}", self.rule))
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            kind: self.features,
            sample_rate: self.sample_rate,
            duration: self.duration,
            image_side: self.image_size,
        }
    }

    pub fn architecture(&self) -> Architecture {
        let mut arch = match self.architecture {
            ArchitectureName::Canonical => Architecture::canonical(),
            ArchitectureName::Reduced => Architecture::reduced(self.num_classes),
        };
        arch.input_size = self.image_size;
        arch.num_classes = self.num_classes;
        arch
    }

    pub fn train_config(&self, class_weights: Option<Vec<f64>>) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            optimizer: NadamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.epsilon,
            },
            seed: self.seed,
            class_weights,
        }
    }

    /// Checks everything that does not need the dataset itself.
    pub fn validate(&self) -> Result<()> {
        self.rule_plan()?;
        self.train_config(None).validate()?;
        if self.num_classes < 2 {
            bail!("num_classes must be at least 2");
        }
        if self.image_size < 2 {
            bail!("image_size must be at least 2");
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) || self.sample_rate == 0 {
            bail!("duration and sample_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bail!("alpha {} outside [0, 1]", self.alpha);
        }
        Ok(())
    }

    /// Dataset and metadata paths, which must exist.
    pub fn dataset_paths(&self) -> Result<(PathBuf, PathBuf)> {
        let dataset = self.dataset.clone().context("no dataset path configured")?;
        let metadata = self.metadata.clone().context("no metadata path configured")?;
        if !dataset.is_dir() {
            bail!("dataset directory {} does not exist", dataset.display());
        }
        if !metadata.is_file() {
            bail!("metadata file {} does not exist", metadata.display());
        }
        Ok((dataset, metadata))
    }

    pub fn features_dir(&self) -> PathBuf {
        self.out.join("features").join(self.features.as_str())
    }

    pub fn model_dir(&self) -> PathBuf {
        self.out.join("model").join(self.features.as_str())
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval").join(self.features.as_str())
    }

    pub fn explain_dir(&self) -> PathBuf {
        self.out.join("explain").join(self.features.as_str()).join(self.rule.replace('+', "_"))
    }
}
