// SPDX-License-Identifier: Apache-2.0

//! Replay memory: reservoir sampling, herding selection, and nearest-mean classification.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BufferPolicy {
    #[default]
    Reservoir,
    Herding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub sample: Sample,
    /// Logits recorded when the sample was stored (dark experience replay only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<Vec<f64>>,
    /// Insertion order; 1-based position in the stream seen by the buffer.
    pub seen_at: usize,
}

impl AsRef<Sample> for BufferEntry {
    fn as_ref(&self) -> &Sample {
        &self.sample
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    policy: BufferPolicy,
    entries: Vec<BufferEntry>,
    seen: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, policy: BufferPolicy) -> Self {
        Self {
            capacity,
            policy,
            entries: Vec::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> BufferPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    /// Items offered to the buffer so far.
    pub fn seen(&self) -> usize {
        self.seen
    }

    /// Offers one more stream item to the reservoir.
    pub fn insert_reservoir<R: Rng + ?Sized>(
        &mut self,
        sample: Sample,
        logits: Option<Vec<f64>>,
        rng: &mut R,
    ) {
        self.seen += 1;
        let seen = self.seen;
        buffer_insert_reservoir(
            self,
            BufferEntry {
                sample,
                logits,
                seen_at: seen,
            },
            seen,
            rng,
        );
    }

    /// Replaces the buffer with per-class exemplar sets (herding); `sets` maps class → entries
    /// in selection order.
    pub fn set_exemplars(&mut self, sets: BTreeMap<usize, Vec<BufferEntry>>) -> Result<()> {
        let total: usize = sets.values().map(Vec::len).sum();
        if total > self.capacity {
            return Err(Error::Argument(format!(
                "{total} exemplars exceed capacity {}",
                self.capacity
            )));
        }
        self.entries = sets.into_values().flatten().collect();
        Ok(())
    }

    /// Exemplars of one class, in stored order.
    pub fn class_entries(&self, class: usize) -> Vec<BufferEntry> {
        self.entries
            .iter()
            .filter(|e| e.sample.label == class)
            .cloned()
            .collect()
    }
}

/// Algorithm R: keep the item outright while there is room, otherwise with probability
/// `capacity / seen_count`, evicting a uniformly chosen victim.
pub fn buffer_insert_reservoir<R: Rng + ?Sized>(
    buffer: &mut ReplayBuffer,
    entry: BufferEntry,
    seen_count: usize,
    rng: &mut R,
) {
    if buffer.capacity == 0 {
        return;
    }
    if buffer.entries.len() < buffer.capacity {
        buffer.entries.push(entry);
        return;
    }
    let j = rng.random_range(0..seen_count.max(1));
    if j < buffer.capacity {
        buffer.entries[j] = entry;
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy herding: repeatedly add the candidate that brings the running exemplar mean
/// closest to the class mean. Returns indices in selection order; ties go to the lowest index.
pub fn buffer_select_herding(features: &[Vec<f64>], m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Ok(Vec::new());
    }
    if m > features.len() {
        return Err(Error::Argument(format!(
            "cannot pick {m} exemplars from {} samples",
            features.len()
        )));
    }
    let dim = features[0].len();
    let n = features.len() as f64;
    let mut target = vec![0.0; dim];
    for f in features {
        for (t, v) in target.iter_mut().zip(f) {
            *t += v / n;
        }
    }
    let mut chosen = Vec::with_capacity(m);
    let mut taken = vec![false; features.len()];
    let mut running = vec![0.0; dim];
    for k in 1..=m {
        let mut best: Option<(usize, f64)> = None;
        for (i, f) in features.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let candidate: Vec<f64> = running
                .iter()
                .zip(f)
                .map(|(s, v)| (s + v) / k as f64)
                .collect();
            let d = sq_dist(&candidate, &target);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("m <= population");
        taken[i] = true;
        for (s, v) in running.iter_mut().zip(&features[i]) {
            *s += v;
        }
        chosen.push(i);
    }
    Ok(chosen)
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Unit-normalised mean feature per class, for nearest-mean-of-exemplars classification.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMeans {
    means: BTreeMap<usize, Vec<f64>>,
}

impl ClassMeans {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mean of the normalised `features`, normalised again.
    pub fn set_from_features(&mut self, class: usize, features: &[Vec<f64>]) {
        if features.is_empty() {
            return;
        }
        let mut mean = vec![0.0; features[0].len()];
        for f in features {
            let mut f = f.clone();
            l2_normalize(&mut f);
            for (m, v) in mean.iter_mut().zip(&f) {
                *m += v;
            }
        }
        l2_normalize(&mut mean);
        self.means.insert(class, mean);
    }

    pub fn insert(&mut self, class: usize, mean: Vec<f64>) {
        self.means.insert(class, mean);
    }

    pub fn get(&self, class: usize) -> Option<&[f64]> {
        self.means.get(&class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.means.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Nearest class mean among `allowed` classes (all known classes when `None`).
/// The query is normalised first; ties go to the lowest class index.
pub fn classify_nme(query: &[f64], means: &ClassMeans, allowed: Option<&[usize]>) -> Option<usize> {
    let mut q = query.to_vec();
    l2_normalize(&mut q);
    let mut best: Option<(usize, f64)> = None;
    for (&c, m) in &means.means {
        if allowed.is_some_and(|a| !a.contains(&c)) {
            continue;
        }
        let d = sq_dist(&q, m);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((c, d));
        }
    }
    best.map(|(c, _)| c)
}
