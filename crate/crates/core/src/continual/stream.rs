// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::augment::{ImageShape, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Class-incremental: no task identity at test time.
    Cil,
    /// Task-incremental: predictions restricted to the sample's task classes.
    Til,
    /// Domain-incremental: every task shares one class set.
    Dil,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Cil => "cil",
            Protocol::Til => "til",
            Protocol::Dil => "dil",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Classes this task contributes, ascending.
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub protocol: Protocol,
    pub tasks: Vec<Task>,
    pub num_classes: usize,
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ImageShape>,
}

impl TaskStream {
    pub fn new(
        protocol: Protocol,
        tasks: Vec<Task>,
        num_classes: usize,
        shape: Option<ImageShape>,
    ) -> Result<Self> {
        let input_dim = tasks
            .iter()
            .flat_map(|t| t.train.iter().chain(&t.test))
            .map(|s| s.features.len())
            .next()
            .ok_or_else(|| Error::Data("stream has no samples".into()))?;
        let stream = Self {
            protocol,
            tasks,
            num_classes,
            input_dim,
            shape,
        };
        stream.validate()?;
        Ok(stream)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for (t, task) in self.tasks.iter().enumerate() {
            if task.train.is_empty() {
                return Err(Error::Data(format!("task {t} has no training samples")));
            }
            for s in task.train.iter().chain(&task.test) {
                if s.features.len() != self.input_dim {
                    return Err(Error::Data(format!(
                        "sample {} has {} features, expected {}",
                        s.sample_id,
                        s.features.len(),
                        self.input_dim
                    )));
                }
                if s.label >= self.num_classes || !task.classes.contains(&s.label) {
                    return Err(Error::Data(format!(
                        "sample {} has label {} outside task {t}'s classes",
                        s.sample_id, s.label
                    )));
                }
                if s.task_id != t {
                    return Err(Error::Data(format!(
                        "sample {} carries task id {} inside task {t}",
                        s.sample_id, s.task_id
                    )));
                }
                if s.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!(
                        "sample {} has non-finite features",
                        s.sample_id
                    )));
                }
                if !ids.insert(s.sample_id) {
                    return Err(Error::Data(format!("duplicate sample id {}", s.sample_id)));
                }
            }
            if self.protocol != Protocol::Dil {
                for c in &task.classes {
                    if !seen.insert(*c) {
                        return Err(Error::Data(format!(
                            "class {c} appears in more than one task"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Classes seen in tasks `0..=upto`, ascending.
    pub fn classes_upto(&self, upto: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.tasks[..=upto]
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect();
        set.into_iter().collect()
    }

    /// Same stream evaluated under a different protocol (CIL streams can be read as TIL).
    pub fn with_protocol(&self, protocol: Protocol) -> Result<Self> {
        let mut s = self.clone();
        s.protocol = protocol;
        s.validate()?;
        Ok(s)
    }
}
