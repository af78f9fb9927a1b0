// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: one JSON document describing data, stream, method,
//! training, network, augmentation, buffer and seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugKind, AugPolicy};
use crate::continual::{BufferSpec, LearnerConfig, MethodSpec, NetworkSpec, Protocol};
use crate::error::{Error, Result};
use crate::nn::{Activation, OptimizerState};
use crate::scheduler::TrainConfig;

fn one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Isotropic Gaussian blobs, one per class, with means on a sphere of
    /// radius `separation`.
    SplitGaussians {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        #[serde(default = "one")]
        noise: f64,
    },
    /// Concentric rings in the first two coordinates, class `k` at radius
    /// `(k + 1) · ring_gap`; any further coordinates are pure noise.
    SplitRings {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        ring_gap: f64,
        #[serde(default = "one")]
        noise: f64,
    },
    /// One Gaussian classification problem seen through a different fixed
    /// coordinate permutation in every task.
    PermutedDomains {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        #[serde(default = "one")]
        noise: f64,
        /// Use the identity permutation for every task.
        #[serde(default)]
        identity: bool,
    },
    /// MNIST-format IDX files split by class.
    IdxImages {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Keep at most this many samples per class and split (0 keeps all).
        #[serde(default)]
        limit_per_class: usize,
    },
}

impl DatasetSpec {
    pub fn generator(&self) -> &'static str {
        match self {
            DatasetSpec::SplitGaussians { .. } => "split-gaussians",
            DatasetSpec::SplitRings { .. } => "split-rings",
            DatasetSpec::PermutedDomains { .. } => "permuted-domains",
            DatasetSpec::IdxImages { .. } => "idx-images",
        }
    }

    /// Number of classes, when known without reading files.
    pub fn classes(&self) -> Option<usize> {
        match *self {
            DatasetSpec::SplitGaussians { classes, .. }
            | DatasetSpec::SplitRings { classes, .. }
            | DatasetSpec::PermutedDomains { classes, .. } => Some(classes),
            DatasetSpec::IdxImages { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let synthetic = |classes: usize, dim: usize, train: usize, noise: f64| {
            if classes < 2 {
                return Err(Error::Config(format!(
                    "need at least 2 classes, got {classes}"
                )));
            }
            if dim == 0 || train == 0 {
                return Err(Error::Config(
                    "dim and train_per_class must be positive".into(),
                ));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Config(format!(
                    "noise must be nonnegative, got {noise}"
                )));
            }
            Ok(())
        };
        match *self {
            DatasetSpec::SplitGaussians {
                classes,
                dim,
                train_per_class,
                separation,
                noise,
                ..
            }
            | DatasetSpec::PermutedDomains {
                classes,
                dim,
                train_per_class,
                separation,
                noise,
                ..
            } => {
                synthetic(classes, dim, train_per_class, noise)?;
                if !(separation >= 0.0 && separation.is_finite()) {
                    return Err(Error::Config(format!(
                        "separation must be nonnegative, got {separation}"
                    )));
                }
                Ok(())
            }
            DatasetSpec::SplitRings {
                classes,
                dim,
                train_per_class,
                ring_gap,
                noise,
                ..
            } => {
                synthetic(classes, dim, train_per_class, noise)?;
                if dim < 2 {
                    return Err(Error::Config("split-rings needs dim >= 2".into()));
                }
                if !(ring_gap > 0.0 && ring_gap.is_finite()) {
                    return Err(Error::Config(format!(
                        "ring_gap must be positive, got {ring_gap}"
                    )));
                }
                Ok(())
            }
            DatasetSpec::IdxImages { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub protocol: Protocol,
    pub tasks: usize,
    /// Classes per task for class-split streams; ignored by domain streams.
    #[serde(default)]
    pub classes_per_task: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    #[serde(default = "AugPolicy::default_weak")]
    pub weak: AugPolicy,
    #[serde(default = "AugPolicy::default_strong")]
    pub strong: AugPolicy,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            weak: AugPolicy::default_weak(),
            strong: AugPolicy::default_strong(),
        }
    }
}

fn default_network() -> NetworkSpec {
    NetworkSpec {
        hidden: vec![64],
        activation: Activation::Relu,
    }
}

fn default_buffer() -> BufferSpec {
    BufferSpec {
        capacity: 0,
        policy: Default::default(),
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dataset: DatasetSpec,
    pub stream: StreamSpec,
    pub method: MethodSpec,
    /// `train.seed` is overwritten by each entry of `seeds`.
    pub train: TrainConfig,
    #[serde(default = "default_network")]
    pub network: NetworkSpec,
    #[serde(default)]
    pub augment: AugmentSpec,
    #[serde(default = "default_buffer")]
    pub buffer: BufferSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory, relative to the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Record per-sample presentation logs and report measured recall intervals.
    #[serde(default = "default_true")]
    pub diagnostics: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field that can be checked without touching data files.
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        let s = &self.stream;
        if s.tasks == 0 {
            return Err(Error::Config("stream.tasks must be at least 1".into()));
        }
        let domain = matches!(self.dataset, DatasetSpec::PermutedDomains { .. });
        match (s.protocol, domain) {
            (Protocol::Dil, false) => {
                return Err(Error::Config(format!(
                    "protocol dil needs a domain generator, not {}",
                    self.dataset.generator()
                )))
            }
            (Protocol::Cil | Protocol::Til, true) => {
                return Err(Error::Config(
                    "permuted-domains produces a domain-incremental stream; use protocol dil"
                        .into(),
                ))
            }
            (Protocol::Cil | Protocol::Til, false) => {
                if s.classes_per_task == 0 {
                    return Err(Error::Config(
                        "stream.classes_per_task must be at least 1".into(),
                    ));
                }
                if let Some(c) = self.dataset.classes() {
                    if s.tasks * s.classes_per_task > c {
                        return Err(Error::Config(format!(
                            "{} tasks of {} classes need {} classes, dataset has {c}",
                            s.tasks,
                            s.classes_per_task,
                            s.tasks * s.classes_per_task
                        )));
                    }
                }
            }
            (Protocol::Dil, true) => {}
        }
        self.method
            .validate(self.buffer.capacity, self.buffer.policy)?;
        let eff = self.method.effective_train(&self.train);
        eff.validate()?;
        OptimizerState::new(eff.learning_rate, eff.momentum, eff.weight_decay)?;
        if self.network.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.augment.weak.kind != AugKind::Weak || self.augment.strong.kind != AugKind::Strong {
            return Err(Error::Config(
                "augment.weak must have kind weak and augment.strong kind strong".into(),
            ));
        }
        // Image-dependent limits are checked again once the data is loaded.
        self.augment.weak.validate(None)?;
        self.augment.strong.validate(None)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration with seeds, output location and
    /// `train.seed` removed. Runs that differ only in seed share a hash.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.output_dir = None;
        c.train.seed = 0;
        hash_value(&c)
    }

    /// Hash of the baseline this configuration is compared against: the same
    /// experiment with the view-batch model switched off.
    pub fn pairing_key(&self) -> String {
        let mut c = self.clone();
        c.seeds.clear();
        c.output_dir = None;
        c.name = None;
        c.train.seed = 0;
        c.method.vbm = false;
        c.train = c.method.effective_train(&c.train);
        hash_value(&c)
    }

    pub fn learner_config(&self, seed: u64) -> LearnerConfig {
        let mut train = self.train.clone();
        train.seed = seed;
        LearnerConfig {
            method: self.method.clone(),
            train,
            network: self.network.clone(),
            weak: self.augment.weak.clone(),
            strong: self.augment.strong.clone(),
            buffer: self.buffer.clone(),
            diagnostics: self.diagnostics,
        }
    }
}

fn hash_value<T: Serialize>(v: &T) -> String {
    // serde_json maps keep keys sorted, so this rendering is canonical.
    let value = serde_json::to_value(v).expect("configuration serialises");
    let text = serde_json::to_string(&value).expect("value serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}
