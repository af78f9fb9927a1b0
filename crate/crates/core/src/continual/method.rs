// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::buffer::BufferPolicy;
use crate::error::{Error, Result};
use crate::scheduler::{TrainConfig, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    /// Plain sequential training.
    Finetune,
    /// Retrain from scratch on every task seen so far (upper bound).
    Joint,
    /// Experience replay.
    Er,
    /// Dark experience replay with labels (DER++).
    Derpp,
    /// Learning without forgetting.
    Lwf,
    /// Herding exemplars, distillation and nearest-mean-of-exemplars classification.
    Icarl,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Finetune => "finetune",
            MethodName::Joint => "joint",
            MethodName::Er => "er",
            MethodName::Derpp => "derpp",
            MethodName::Lwf => "lwf",
            MethodName::Icarl => "icarl",
        }
    }

    pub fn uses_buffer(&self) -> bool {
        matches!(self, MethodName::Er | MethodName::Derpp | MethodName::Icarl)
    }

    pub fn distills(&self) -> bool {
        matches!(self, MethodName::Lwf | MethodName::Icarl)
    }
}

impl std::fmt::Display for MethodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn half() -> f64 {
    0.5
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: MethodName,
    /// DER++ weight of the logit-matching term.
    #[serde(default = "half")]
    pub alpha: f64,
    /// DER++ weight of the buffer cross-entropy term.
    #[serde(default = "half")]
    pub beta: f64,
    /// Distillation temperature for LwF and iCaRL.
    #[serde(default = "two")]
    pub kd_temperature: f64,
    /// Run under the view-batch model. When false the view count, consistency
    /// loss and strong augmentation settings of the training config are ignored.
    #[serde(default)]
    pub vbm: bool,
}

impl MethodSpec {
    pub fn new(name: MethodName) -> Self {
        Self {
            name,
            alpha: half(),
            beta: half(),
            kd_temperature: two(),
            vbm: false,
        }
    }

    pub fn with_vbm(mut self, vbm: bool) -> Self {
        self.vbm = vbm;
        self
    }

    /// Checks hyper-parameters and method/buffer compatibility.
    pub fn validate(&self, capacity: usize, policy: BufferPolicy) -> Result<()> {
        for (k, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be nonnegative, got {v}")));
            }
        }
        if !(self.kd_temperature >= 1.0 && self.kd_temperature.is_finite()) {
            return Err(Error::Config(format!(
                "kd_temperature must be at least 1, got {}",
                self.kd_temperature
            )));
        }
        match (self.name.uses_buffer(), capacity) {
            (true, 0) => {
                return Err(Error::Config(format!(
                    "{} replays a memory buffer; set a positive capacity",
                    self.name
                )))
            }
            (false, c) if c > 0 => {
                return Err(Error::Config(format!(
                    "{} does not rehearse; buffer capacity must be 0",
                    self.name
                )))
            }
            _ => {}
        }
        match (self.name, policy) {
            (MethodName::Icarl, BufferPolicy::Reservoir) if capacity > 0 => Err(Error::Config(
                "icarl selects exemplars by herding; use the herding policy".into(),
            )),
            (MethodName::Derpp, BufferPolicy::Herding) => Err(Error::Config(
                "derpp stores logits as samples stream in; use the reservoir policy".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Training configuration actually used: baselines train on single weak views
    /// with the conventional scheduler.
    pub fn effective_train(&self, cfg: &TrainConfig) -> TrainConfig {
        let mut out = cfg.clone();
        if !self.vbm {
            out.views = 1;
            out.ssl_enabled = false;
            out.strong_aug_enabled = false;
            out.variant = Variant::Sample;
            out.expand_buffer = true;
        }
        out
    }
}
