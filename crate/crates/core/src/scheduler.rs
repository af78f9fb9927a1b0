// SPDX-License-Identifier: Apache-2.0

//! Replay schedulers.
//!
//! The conventional scheduler walks a fresh permutation of the pool each epoch,
//! `B` samples per step, so a sample returns after `B·T` presentations. The
//! view-batch scheduler takes `B/V` samples per step and expands each into `V`
//! views, so the same presentation stream revisits a sample only every `B·T·V`
//! presentations. Epochs shrink by `V` to keep the presentation budget
//! (`base_epochs · N`) fixed; the last epoch is cut short when `V` does not
//! divide `base_epochs`.
//!
//! The class-based variant instead restricts each epoch to one group of
//! classes and repeats that group `G` times within the epoch.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::augment::{Augmenter, Sample};
use crate::error::{Error, Result};
use crate::rng::RunStreams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Conventional,
    ViewBatchSample,
    ViewBatchClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Views of one sample per entry (VBM-S).
    #[default]
    Sample,
    /// Class-restricted epochs (VBM-C).
    Class,
}

fn default_true() -> bool {
    true
}

fn default_class_groups() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_epochs: usize,
    pub batch_size: usize,
    pub views: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ssl_enabled: bool,
    #[serde(default = "default_true")]
    pub strong_aug_enabled: bool,
    /// Back-propagate through the weak-view target of the consistency loss.
    #[serde(default)]
    pub ssl_grad_through_target: bool,
    #[serde(default)]
    pub variant: Variant,
    /// Number of class groups for the class-based variant.
    #[serde(default = "default_class_groups")]
    pub class_groups: usize,
    /// Logical replay batch drawn from the buffer each step; `0` means `batch_size`.
    #[serde(default)]
    pub buffer_batch_size: usize,
    /// Expand buffer entries into view-batches like current samples. When false,
    /// each replayed buffer sample contributes a single weak view.
    #[serde(default = "default_true")]
    pub expand_buffer: bool,
}

impl TrainConfig {
    pub fn new(base_epochs: usize, batch_size: usize, views: usize, learning_rate: f64) -> Self {
        Self {
            base_epochs,
            batch_size,
            views,
            learning_rate,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
            ssl_enabled: false,
            strong_aug_enabled: true,
            ssl_grad_through_target: false,
            variant: Variant::Sample,
            class_groups: default_class_groups(),
            buffer_batch_size: 0,
            expand_buffer: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.views == 0 {
            return Err(Error::Config("views must be at least 1".into()));
        }
        if self.batch_size < self.views {
            return Err(Error::Config(format!(
                "batch size {} is smaller than the view count {}",
                self.batch_size, self.views
            )));
        }
        if !self.batch_size.is_multiple_of(self.views) {
            return Err(Error::Config(format!(
                "batch size {} is not divisible by the view count {}",
                self.batch_size, self.views
            )));
        }
        if self.expand_buffer && !self.buffer_batch().is_multiple_of(self.views) {
            return Err(Error::Config(format!(
                "buffer batch size {} is not divisible by the view count {}",
                self.buffer_batch(),
                self.views
            )));
        }
        if self.base_epochs == 0 {
            return Err(Error::Config("base_epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.variant == Variant::Class && self.class_groups == 0 {
            return Err(Error::Config("class_groups must be at least 1".into()));
        }
        Ok(())
    }

    pub fn buffer_batch(&self) -> usize {
        if self.buffer_batch_size == 0 {
            self.batch_size
        } else {
            self.buffer_batch_size
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Index into the current task's training pool.
    Current(usize),
    /// Index into the replay buffer.
    Buffer(usize),
}

impl Origin {
    pub fn is_buffer(&self) -> bool {
        matches!(self, Origin::Buffer(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewEntry {
    /// Weak view first, strong views after.
    pub views: Vec<Sample>,
    pub origin: Origin,
}

impl ViewEntry {
    pub fn sample_id(&self) -> u64 {
        self.views[0].sample_id
    }

    pub fn label(&self) -> usize {
        self.views[0].label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    pub views: usize,
    pub entries: Vec<ViewEntry>,
}

impl ViewBatch {
    pub fn presentations(&self) -> usize {
        self.entries.iter().map(|e| e.views.len()).sum()
    }
}

/// One visit of a sample in the presentation stream: `views` consecutive presentations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub sample_id: u64,
    pub views: u32,
    pub from_buffer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Batch(ViewBatch),
    /// The epoch with this (0-based) index has just finished.
    EpochEnd(usize),
    Finished,
}

#[derive(Debug, Clone)]
pub struct Schedule {
    mode: ScheduleMode,
    batch_size: usize,
    views: usize,
    entries_per_step: usize,
    pool_size: usize,
    budget: usize,
    class_groups: Vec<Vec<usize>>,
    buffer_entries: usize,
    buffer_views: usize,

    epoch: usize,
    epoch_open: bool,
    order: Vec<usize>,
    cursor: usize,
    presented: usize,
    log: Option<Vec<Visit>>,
}

/// Builds the sample-level scheduler: conventional when `V = 1`, view-batch otherwise.
pub fn build_schedule(n: usize, cfg: &TrainConfig) -> Result<Schedule> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Argument("cannot schedule an empty pool".into()));
    }
    let mode = if cfg.views == 1 {
        ScheduleMode::Conventional
    } else {
        ScheduleMode::ViewBatchSample
    };
    Ok(Schedule::fresh(
        mode,
        cfg,
        n,
        cfg.views,
        cfg.batch_size / cfg.views,
        Vec::new(),
    ))
}

/// Builds the class-based scheduler. Classes (in ascending order) are split into
/// `cfg.class_groups` contiguous groups of `ceil(C/G)`; the last may be smaller.
pub fn build_schedule_class_variant(labels: &[usize], cfg: &TrainConfig) -> Result<Schedule> {
    cfg.validate()?;
    if labels.is_empty() {
        return Err(Error::Argument("cannot schedule an empty pool".into()));
    }
    if cfg.class_groups == 0 {
        return Err(Error::Config("class_groups must be at least 1".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let per_group = classes.len().div_ceil(cfg.class_groups);
    let groups: Vec<Vec<usize>> = classes
        .chunks(per_group)
        .map(|cs| {
            labels
                .iter()
                .enumerate()
                .filter(|(_, l)| cs.contains(l))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(Schedule::fresh(
        ScheduleMode::ViewBatchClass,
        cfg,
        labels.len(),
        1,
        cfg.batch_size,
        groups,
    ))
}

impl Schedule {
    fn fresh(
        mode: ScheduleMode,
        cfg: &TrainConfig,
        n: usize,
        views: usize,
        entries_per_step: usize,
        class_groups: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            mode,
            batch_size: cfg.batch_size,
            views,
            entries_per_step,
            pool_size: n,
            budget: cfg.base_epochs * n,
            class_groups,
            buffer_entries: if cfg.expand_buffer {
                cfg.buffer_batch() / views
            } else {
                cfg.buffer_batch()
            },
            buffer_views: if cfg.expand_buffer { views } else { 1 },
            epoch: 0,
            epoch_open: false,
            order: Vec::new(),
            cursor: 0,
            presented: 0,
            log: None,
        }
    }

    /// Keeps an ordered record of every visit, for recall-interval diagnostics.
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    /// Overrides how many buffer entries are drawn per step.
    pub fn with_buffer_entries(mut self, entries: usize) -> Self {
        self.buffer_entries = entries;
        self
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn views(&self) -> usize {
        self.views
    }

    /// Unique current samples per full step.
    pub fn entries_per_step(&self) -> usize {
        self.entries_per_step
    }

    pub fn buffer_entries(&self) -> usize {
        self.buffer_entries
    }

    pub fn presentation_budget(&self) -> usize {
        self.budget
    }

    pub fn presented(&self) -> usize {
        self.presented
    }

    pub fn log(&self) -> Option<&[Visit]> {
        self.log.as_deref()
    }

    fn epoch_len(&self, epoch: usize) -> usize {
        match self.mode {
            ScheduleMode::ViewBatchClass => {
                let g = &self.class_groups[epoch % self.class_groups.len()];
                g.len() * self.class_groups.len()
            }
            _ => self.pool_size,
        }
    }

    /// Steps in a full epoch (T); for the class variant, the first epoch's count.
    pub fn steps_per_epoch(&self) -> usize {
        self.epoch_len(0).div_ceil(self.entries_per_step)
    }

    /// Entries emitted per step over the whole schedule, without drawing any randomness.
    fn planned_steps(&self) -> Vec<Vec<usize>> {
        let mut epochs = Vec::new();
        let mut presented = 0;
        let mut e = 0;
        while presented < self.budget {
            let len = self.epoch_len(e);
            let mut steps = Vec::new();
            let mut cursor = 0;
            while cursor < len && presented < self.budget {
                let remaining = (self.budget - presented).div_ceil(self.views);
                let k = self.entries_per_step.min(len - cursor).min(remaining);
                steps.push(k);
                cursor += k;
                presented += k * self.views;
            }
            epochs.push(steps);
            e += 1;
        }
        epochs
    }

    /// Epochs after rescaling; the last may be partial.
    pub fn epochs(&self) -> usize {
        self.planned_steps().len()
    }

    pub fn total_steps(&self) -> usize {
        self.planned_steps().iter().map(Vec::len).sum()
    }

    /// Current-sample presentations the schedule will emit in total.
    pub fn planned_presentations(&self) -> usize {
        self.planned_steps()
            .iter()
            .flatten()
            .map(|k| k * self.views)
            .sum()
    }

    fn start_epoch(&mut self, rngs: &mut RunStreams) {
        self.order.clear();
        self.cursor = 0;
        match self.mode {
            ScheduleMode::ViewBatchClass => {
                let g = self.class_groups[self.epoch % self.class_groups.len()].clone();
                for _ in 0..self.class_groups.len() {
                    let mut pass = g.clone();
                    pass.shuffle(&mut rngs.schedule);
                    self.order.extend(pass);
                }
            }
            _ => {
                self.order.extend(0..self.pool_size);
                self.order.shuffle(&mut rngs.schedule);
            }
        }
        self.epoch_open = true;
    }

    fn close_epoch(&mut self) -> Step {
        self.epoch_open = false;
        let done = self.epoch;
        self.epoch += 1;
        Step::EpochEnd(done)
    }

    /// Emits the next view-batch, an epoch boundary, or the end of the schedule.
    ///
    /// Current samples are drawn without replacement within an epoch; buffer
    /// entries are drawn uniformly without replacement within the step and
    /// get the same weak/strong expansion.
    pub fn next_view_batch<P: AsRef<Sample>>(
        &mut self,
        current_pool: &[Sample],
        buffer_pool: &[P],
        augmenter: &Augmenter,
        rngs: &mut RunStreams,
    ) -> Result<Step> {
        if current_pool.len() != self.pool_size {
            return Err(Error::Argument(format!(
                "schedule built for {} samples, given a pool of {}",
                self.pool_size,
                current_pool.len()
            )));
        }
        if self.presented >= self.budget {
            return Ok(if self.epoch_open {
                self.close_epoch()
            } else {
                Step::Finished
            });
        }
        if !self.epoch_open {
            self.start_epoch(rngs);
        }
        if self.cursor == self.order.len() {
            return Ok(self.close_epoch());
        }
        let remaining = (self.budget - self.presented).div_ceil(self.views);
        let k = self
            .entries_per_step
            .min(self.order.len() - self.cursor)
            .min(remaining);
        let picked = self.order[self.cursor..self.cursor + k].to_vec();
        self.cursor += k;
        self.presented += k * self.views;

        let mut entries = Vec::with_capacity(k + self.buffer_entries);
        for i in picked {
            entries.push(ViewEntry {
                views: augmenter.make_views(&current_pool[i], self.views, &mut rngs.augment)?,
                origin: Origin::Current(i),
            });
        }
        let m = self.buffer_entries.min(buffer_pool.len());
        if m > 0 {
            let chosen = index::sample(&mut rngs.buffer, buffer_pool.len(), m);
            for j in chosen.iter() {
                entries.push(ViewEntry {
                    views: augmenter.make_views(
                        buffer_pool[j].as_ref(),
                        self.buffer_views,
                        &mut rngs.augment,
                    )?,
                    origin: Origin::Buffer(j),
                });
            }
        }
        if let Some(log) = &mut self.log {
            log.extend(entries.iter().map(|e| Visit {
                sample_id: e.sample_id(),
                views: e.views.len() as u32,
                from_buffer: e.origin.is_buffer(),
            }));
        }
        Ok(Step::Batch(ViewBatch {
            views: self.views,
            entries,
        }))
    }

    pub fn summary(&self) -> ScheduleSummary {
        ScheduleSummary {
            mode: self.mode,
            batch_size: self.batch_size,
            views: self.views,
            steps_per_epoch: self.steps_per_epoch(),
            epochs: self.epochs(),
            presentations: self.planned_presentations(),
            recall_interval: self.log().and_then(|l| measure_recall_interval(l).ok()),
        }
    }
}

/// Per-run schedule description emitted alongside run records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub mode: ScheduleMode,
    pub batch_size: usize,
    pub views: usize,
    pub steps_per_epoch: usize,
    pub epochs: usize,
    pub presentations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall_interval: Option<RecallStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallStats {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub count: usize,
    /// (gap, occurrences), ascending by gap.
    pub histogram: Vec<(usize, usize)>,
}

/// Gap statistics over a presentation log.
///
/// A gap is the number of presentations from the first view of one visit of a
/// sample to the first view of its next visit. Samples visited once contribute
/// nothing.
pub fn measure_recall_interval(log: &[Visit]) -> Result<RecallStats> {
    let mut last_start: BTreeMap<u64, usize> = BTreeMap::new();
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pos = 0usize;
    for v in log {
        if let Some(prev) = last_start.insert(v.sample_id, pos) {
            *hist.entry(pos - prev).or_default() += 1;
        }
        pos += v.views as usize;
    }
    let count: usize = hist.values().sum();
    if count == 0 {
        return Err(Error::Argument(
            "no sample is visited twice; the log must cover at least two epochs".into(),
        ));
    }
    let total: usize = hist.iter().map(|(g, c)| g * c).sum();
    Ok(RecallStats {
        mean: total as f64 / count as f64,
        min: *hist.keys().next().unwrap(),
        max: *hist.keys().next_back().unwrap(),
        count,
        histogram: hist.into_iter().collect(),
    })
}
