// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::buffer::{
    buffer_select_herding, classify_nme, l2_normalize, BufferEntry, BufferPolicy, ClassMeans,
    ReplayBuffer,
};
use super::losses::{distillation_term, logit_mse_term, ssl_term, supervised_term, Group};
use super::method::{MethodName, MethodSpec};
use super::stream::{Protocol, TaskStream};
use crate::augment::{AugPolicy, Augmenter, Sample};
use crate::error::{Error, Result};
use crate::metrics::{AccuracyMatrix, EpochEval, RetentionTrace};
use crate::nn::{sgd_step, Activation, Matrix, Network, OptimizerState};
use crate::rng::{RunStreams, SeedTree, INIT};
use crate::scheduler::{
    build_schedule, build_schedule_class_variant, Origin, Schedule, ScheduleSummary, Step,
    TrainConfig, Variant, ViewBatch,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferSpec {
    #[serde(default)]
    pub capacity: usize,
    #[serde(default)]
    pub policy: BufferPolicy,
}

/// Everything a [`Learner`] needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub method: MethodSpec,
    pub train: TrainConfig,
    pub network: NetworkSpec,
    pub weak: AugPolicy,
    pub strong: AugPolicy,
    pub buffer: BufferSpec,
    /// Keep per-task presentation logs for recall-interval measurement.
    pub diagnostics: bool,
}

/// Loss components of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub total: f64,
    pub supervised: f64,
    pub ssl: f64,
    /// Method-specific terms (logit matching, buffer CE, distillation).
    pub extra: f64,
}

/// Hook called after every optimisation step with the batch and its pre-update logits.
pub trait StepObserver {
    fn on_step(&mut self, task: usize, batch: &ViewBatch, logits: &Matrix, loss: &StepLoss);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task: usize,
    pub retention: RetentionTrace,
    pub epoch_evals: Vec<EpochEval>,
    pub schedule: ScheduleSummary,
    pub step_losses: Vec<f64>,
}

/// A network plus its optimiser, replay memory and randomness, trained task by task.
pub struct Learner {
    cfg: LearnerConfig,
    train: TrainConfig,
    seeds: SeedTree,
    streams: RunStreams,
    net: Network,
    opt: OptimizerState,
    augmenter: Augmenter,
    buffer: ReplayBuffer,
    class_means: ClassMeans,
    teacher: Option<Network>,
    trained: usize,
}

impl Learner {
    pub fn new(stream: &TaskStream, cfg: LearnerConfig) -> Result<Self> {
        cfg.method
            .validate(cfg.buffer.capacity, cfg.buffer.policy)?;
        let train = cfg.method.effective_train(&cfg.train);
        train.validate()?;
        let seeds = SeedTree::new(cfg.train.seed);
        let mut streams = RunStreams::new(seeds);
        let net = Self::init_network(stream, &cfg.network, seeds.seed(), &mut streams.init)?;
        let opt = OptimizerState::new(train.learning_rate, train.momentum, train.weight_decay)?;
        let augmenter = Augmenter::new(
            cfg.weak.clone(),
            cfg.strong.clone(),
            train.strong_aug_enabled,
            stream.shape,
        )?;
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.buffer.capacity, cfg.buffer.policy),
            cfg,
            train,
            seeds,
            streams,
            net,
            opt,
            augmenter,
            class_means: ClassMeans::new(),
            teacher: None,
            trained: 0,
        })
    }

    fn init_network<R: rand::Rng + ?Sized>(
        stream: &TaskStream,
        spec: &NetworkSpec,
        seed: u64,
        rng: &mut R,
    ) -> Result<Network> {
        let mut dims = vec![stream.input_dim];
        dims.extend(&spec.hidden);
        dims.push(stream.num_classes);
        Network::new(&dims, spec.activation, seed, rng)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn class_means(&self) -> &ClassMeans {
        &self.class_means
    }

    /// The training configuration after baseline normalisation.
    pub fn effective_train(&self) -> &TrainConfig {
        &self.train
    }

    pub fn tasks_trained(&self) -> usize {
        self.trained
    }

    pub fn train_task(&mut self, stream: &TaskStream, task: usize) -> Result<TaskOutcome> {
        self.train_task_observed(stream, task, None)
    }

    /// Trains on `task`, which must be the next untrained task.
    pub fn train_task_observed(
        &mut self,
        stream: &TaskStream,
        task: usize,
        mut observer: Option<&mut dyn StepObserver>,
    ) -> Result<TaskOutcome> {
        if task != self.trained {
            return Err(Error::Argument(format!(
                "task {task} requested but {} tasks have been trained",
                self.trained
            )));
        }
        if task >= stream.len() {
            return Err(Error::Argument(format!(
                "task {task} beyond a stream of {} tasks",
                stream.len()
            )));
        }
        let method = self.cfg.method.name;
        let pool: Vec<Sample> = if method == MethodName::Joint {
            self.net = Self::init_network(
                stream,
                &self.cfg.network,
                self.seeds.seed(),
                &mut self.seeds.indexed(INIT, task as u64),
            )?;
            self.opt.reset();
            stream.tasks[..=task]
                .iter()
                .flat_map(|t| t.train.iter().cloned())
                .collect()
        } else {
            stream.tasks[task].train.clone()
        };
        self.teacher = (method.distills() && task > 0).then(|| self.net.snapshot());
        let old_classes = if task == 0 {
            Vec::new()
        } else if stream.protocol == Protocol::Dil {
            (0..stream.num_classes).collect()
        } else {
            stream.classes_upto(task - 1)
        };

        let mut schedule = self.schedule_for(&pool)?;
        let mut retention = Vec::new();
        let mut epoch_evals = Vec::new();
        let mut step_losses = Vec::new();
        let replay: Vec<BufferEntry> = if method.uses_buffer() {
            self.buffer.entries().to_vec()
        } else {
            Vec::new()
        };
        loop {
            match schedule.next_view_batch(&pool, &replay, &self.augmenter, &mut self.streams)? {
                Step::Batch(batch) => {
                    let (loss, logits) = self.step(&batch, &replay, &old_classes)?;
                    step_losses.push(loss.total);
                    if let Some(obs) = observer.as_deref_mut() {
                        obs.on_step(task, &batch, &logits, &loss);
                    }
                }
                Step::EpochEnd(epoch) => {
                    let acc = evaluate(&self.net, stream, stream.protocol, task, None)?;
                    retention.push(acc[task]);
                    epoch_evals.push(EpochEval {
                        task,
                        epoch,
                        accuracies: acc,
                    });
                }
                Step::Finished => break,
            }
        }
        self.update_buffer(stream, task)?;
        self.trained += 1;
        Ok(TaskOutcome {
            task,
            retention: RetentionTrace::new(retention),
            epoch_evals,
            schedule: schedule.summary(),
            step_losses,
        })
    }

    fn schedule_for(&self, pool: &[Sample]) -> Result<Schedule> {
        let s = match self.train.variant {
            Variant::Sample => build_schedule(pool.len(), &self.train)?,
            Variant::Class => {
                let labels: Vec<usize> = pool.iter().map(|s| s.label).collect();
                build_schedule_class_variant(&labels, &self.train)?
            }
        };
        Ok(if self.cfg.diagnostics {
            s.with_log()
        } else {
            s
        })
    }

    fn step(
        &mut self,
        batch: &ViewBatch,
        replay: &[BufferEntry],
        old_classes: &[usize],
    ) -> Result<(StepLoss, Matrix)> {
        let n_rows = batch.presentations();
        let dim = self.net.input_dim();
        let mut data = Vec::with_capacity(n_rows * dim);
        let mut current = Vec::new();
        let mut buffered = Vec::new();
        let mut stored: Vec<&[f64]> = Vec::new();
        let mut stored_rows = Vec::new();
        let mut row = 0;
        for entry in &batch.entries {
            for v in &entry.views {
                data.extend_from_slice(&v.features);
            }
            let group = Group {
                rows: row..row + entry.views.len(),
                label: entry.label(),
            };
            if let Origin::Buffer(j) = entry.origin {
                if let Some(l) = &replay[j].logits {
                    for r in group.rows.clone() {
                        stored.push(l);
                        stored_rows.push(r);
                    }
                }
                buffered.push(group);
            } else {
                current.push(group);
            }
            row += entry.views.len();
        }
        let inputs = Matrix::from_vec(n_rows, dim, data)?;
        let logits = self.net.forward(&inputs)?;
        if logits.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(
                "non-finite logits; lower the learning rate or the loss weights".into(),
            ));
        }
        let mut grad = Matrix::zeros(logits.rows(), logits.cols());
        let spec = &self.cfg.method;

        let all: Vec<Group> = current.iter().chain(&buffered).cloned().collect();
        let mut extra = 0.0;
        let supervised = match spec.name {
            MethodName::Derpp => {
                let ce = supervised_term(&logits, &current, 1.0, Some(&mut grad))?;
                if !buffered.is_empty() {
                    extra += spec.beta
                        * supervised_term(&logits, &buffered, spec.beta, Some(&mut grad))?;
                    extra += spec.alpha
                        * logit_mse_term(
                            &logits,
                            &stored_rows,
                            &stored,
                            spec.alpha,
                            Some(&mut grad),
                        )?;
                }
                ce
            }
            _ => supervised_term(&logits, &all, 1.0, Some(&mut grad))?,
        };
        let ssl = if self.train.ssl_enabled {
            ssl_term(
                &logits,
                &all,
                1.0,
                self.train.ssl_grad_through_target,
                Some(&mut grad),
            )?
            .value
        } else {
            0.0
        };
        if let Some(teacher) = &self.teacher {
            let t = teacher.predict(&inputs)?;
            let rows: Vec<usize> = (0..n_rows).collect();
            extra += distillation_term(
                &logits,
                &rows,
                &t,
                old_classes,
                spec.kd_temperature,
                1.0,
                Some(&mut grad),
            )?;
        }
        self.net.backward(&grad)?;
        sgd_step(&mut self.net, &mut self.opt);
        Ok((
            StepLoss {
                total: supervised + ssl + extra,
                supervised,
                ssl,
                extra,
            },
            logits,
        ))
    }

    fn update_buffer(&mut self, stream: &TaskStream, task: usize) -> Result<()> {
        if !self.cfg.method.name.uses_buffer() || self.buffer.capacity() == 0 {
            return Ok(());
        }
        let train = &stream.tasks[task].train;
        match self.buffer.policy() {
            BufferPolicy::Reservoir => {
                let mut order: Vec<usize> = (0..train.len()).collect();
                order.shuffle(&mut self.streams.buffer);
                let keep_logits = self.cfg.method.name == MethodName::Derpp;
                for i in order {
                    let s = &train[i];
                    let logits = if keep_logits {
                        let x = Matrix::from_vec(1, s.features.len(), s.features.clone())?;
                        Some(self.net.predict(&x)?.into_vec())
                    } else {
                        None
                    };
                    self.buffer
                        .insert_reservoir(s.clone(), logits, &mut self.streams.buffer);
                }
            }
            BufferPolicy::Herding => {
                let classes = stream.classes_upto(task);
                let per_class = self.buffer.capacity() / classes.len();
                let mut sets = BTreeMap::new();
                for &c in &classes {
                    let mut candidates = self.buffer.class_entries(c);
                    let fresh = train.iter().filter(|s| s.label == c);
                    let base = self.buffer.seen();
                    candidates.extend(fresh.enumerate().map(|(k, s)| BufferEntry {
                        sample: s.clone(),
                        logits: None,
                        seen_at: base + k + 1,
                    }));
                    let feats = self.normalized_features(&candidates)?;
                    let m = per_class.min(candidates.len());
                    let picked = buffer_select_herding(&feats, m)?;
                    sets.insert(
                        c,
                        picked.into_iter().map(|i| candidates[i].clone()).collect(),
                    );
                }
                self.buffer.set_exemplars(sets)?;
                self.refresh_class_means(&classes)?;
            }
        }
        Ok(())
    }

    fn normalized_features(&self, entries: &[BufferEntry]) -> Result<Vec<Vec<f64>>> {
        if entries.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<&[f64]> = entries
            .iter()
            .map(|e| e.sample.features.as_slice())
            .collect();
        let f = self.net.features(&Matrix::from_rows(&rows)?)?;
        Ok(f.iter_rows()
            .map(|r| {
                let mut v = r.to_vec();
                l2_normalize(&mut v);
                v
            })
            .collect())
    }

    fn refresh_class_means(&mut self, classes: &[usize]) -> Result<()> {
        let mut means = ClassMeans::new();
        for &c in classes {
            let feats = self.normalized_features(&self.buffer.class_entries(c))?;
            means.set_from_features(c, &feats);
        }
        self.class_means = means;
        Ok(())
    }

    /// Accuracy on tasks `0..=upto`; iCaRL classifies by nearest exemplar mean.
    pub fn evaluate(
        &self,
        stream: &TaskStream,
        protocol: Protocol,
        upto: usize,
    ) -> Result<Vec<f64>> {
        if upto >= self.trained {
            return Err(Error::Argument(format!(
                "cannot evaluate up to task {upto}: {} tasks trained",
                self.trained
            )));
        }
        let nme = (self.cfg.method.name == MethodName::Icarl && !self.class_means.is_empty())
            .then_some(&self.class_means);
        evaluate(&self.net, stream, protocol, upto, nme)
    }
}

/// Index of the largest allowed logit; ties go to the lowest index.
fn masked_argmax(logits: &[f64], allowed: &[usize]) -> usize {
    let mut best = allowed[0];
    for &c in &allowed[1..] {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    best
}

/// Per-task test accuracy after training up to `upto`.
///
/// CIL predicts among every class seen so far, TIL among the sample's task classes,
/// and DIL among the shared class set. With `nme` given, predictions come from the
/// nearest class mean in feature space instead of the logits.
pub fn evaluate(
    net: &Network,
    stream: &TaskStream,
    protocol: Protocol,
    upto: usize,
    nme: Option<&ClassMeans>,
) -> Result<Vec<f64>> {
    if upto >= stream.len() {
        return Err(Error::Argument(format!(
            "task {upto} beyond a stream of {} tasks",
            stream.len()
        )));
    }
    let seen = match protocol {
        Protocol::Dil => (0..stream.num_classes).collect(),
        _ => stream.classes_upto(upto),
    };
    let mut out = Vec::with_capacity(upto + 1);
    for task in &stream.tasks[..=upto] {
        if task.test.is_empty() {
            out.push(0.0);
            continue;
        }
        let allowed: &[usize] = match protocol {
            Protocol::Til => &task.classes,
            _ => &seen,
        };
        let rows: Vec<&[f64]> = task.test.iter().map(|s| s.features.as_slice()).collect();
        let x = Matrix::from_rows(&rows)?;
        let correct = match nme {
            Some(means) => {
                let f = net.features(&x)?;
                f.iter_rows()
                    .zip(&task.test)
                    .filter(|(r, s)| classify_nme(r, means, Some(allowed)) == Some(s.label))
                    .count()
            }
            None => {
                let z = net.predict(&x)?;
                z.iter_rows()
                    .zip(&task.test)
                    .filter(|(r, s)| masked_argmax(r, allowed) == s.label)
                    .count()
            }
        };
        out.push(correct as f64 / task.test.len() as f64);
    }
    Ok(out)
}

/// Output of a full pass over a task stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub protocol: Protocol,
    pub accuracy: AccuracyMatrix,
    /// Task-aware view of the same run, for class-split streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub til_accuracy: Option<AccuracyMatrix>,
    pub tasks: Vec<TaskOutcome>,
}

/// Trains on every task in order, evaluating after each one.
pub fn run_stream(
    stream: &TaskStream,
    cfg: LearnerConfig,
    mut observer: Option<&mut dyn StepObserver>,
) -> Result<StreamResult> {
    let mut learner = Learner::new(stream, cfg)?;
    let mut accuracy = AccuracyMatrix::new();
    let mut til = (stream.protocol == Protocol::Cil).then(AccuracyMatrix::new);
    let mut tasks = Vec::with_capacity(stream.len());
    for t in 0..stream.len() {
        let obs = observer.as_mut().map(|o| &mut **o as &mut dyn StepObserver);
        tasks.push(learner.train_task_observed(stream, t, obs)?);
        accuracy.push_row(learner.evaluate(stream, stream.protocol, t)?)?;
        if let Some(m) = &mut til {
            m.push_row(learner.evaluate(stream, Protocol::Til, t)?)?;
        }
    }
    Ok(StreamResult {
        protocol: stream.protocol,
        accuracy,
        til_accuracy: til,
        tasks,
    })
}
