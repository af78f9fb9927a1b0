// SPDX-License-Identifier: Apache-2.0

//! Criterion checks shared by the integration tests and the acceptance runner.
//!
//! Every check returns a [`Check`] instead of panicking so the acceptance runner
//! can report all criteria, including failing ones, in a single pass.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vbm_core::augment::{AugKind, AugPolicy, Augmenter, Sample};
use vbm_core::continual::{
    buffer_select_herding, distillation_term, logit_mse_term, run_stream, ssl_term,
    supervised_term, BufferPolicy, BufferSpec, Group, LearnerConfig, MethodName, MethodSpec,
    NetworkSpec, Protocol, ReplayBuffer, StepLoss, StepObserver, Task, TaskStream,
};
use vbm_core::io::{run, run_seed, ExperimentConfig, RunRecord};
use vbm_core::metrics::{
    avg_accuracy, degree_of_forgetting, forgetting, last_accuracy, AccuracyMatrix, MeanStd,
    RetentionTrace, SATURATION_TOLERANCE,
};
use vbm_core::nn::{kl_divergence, softmax, Activation, Matrix, Network};
use vbm_core::rng::{RunStreams, SeedTree};
use vbm_core::scheduler::{build_schedule, measure_recall_interval, Step, TrainConfig, ViewBatch};
use vbm_core::spacing::{decay_rate, optimal_interval, retention, SpacingParams};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(id: u8, name: &'static str, pass: bool, detail: String) -> Self {
        Self {
            id,
            name,
            pass,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {}: {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }

    pub fn assert(&self) {
        assert!(self.pass, "{}", self.line());
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------------------
// 1. Gradients against central finite differences
// ---------------------------------------------------------------------------

pub const GRAD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
/// Gradient components below this magnitude are compared absolutely.
const GRAD_FLOOR: f64 = 1e-6;

/// One random problem: network, stacked view inputs, groups and auxiliary targets.
pub struct GradProblem {
    pub net: Network,
    pub inputs: Matrix,
    pub groups: Vec<Group>,
    /// Groups treated as replayed buffer entries by the DER++ objective.
    pub buffer_from: usize,
    pub stored: Vec<Vec<f64>>,
    pub teacher: Network,
    pub old_classes: Vec<usize>,
}

pub fn grad_problem(draw: u64) -> GradProblem {
    let mut r = rng(0x6a4d_0000 + draw);
    let hidden_layers = 1 + (draw % 3) as usize;
    let activation = if draw.is_multiple_of(2) {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    let input = r.random_range(3..7);
    let classes = r.random_range(3..6);
    let mut dims = vec![input];
    for _ in 0..hidden_layers {
        dims.push(r.random_range(3..7));
    }
    dims.push(classes);
    let mut net = Network::new(&dims, activation, draw, &mut r).unwrap();
    let teacher = Network::new(&dims, activation, draw + 1, &mut r).unwrap();
    // Nonzero biases keep ReLU units off their kink, where finite differences
    // and the subgradient legitimately disagree.
    let theta: Vec<f64> = net
        .params()
        .iter()
        .map(|w| w + 0.3 * normal(&mut r))
        .collect();
    net.set_params(&theta).unwrap();

    let entries = r.random_range(2..5);
    let views = r.random_range(1..4);
    let rows = entries * views;
    let data: Vec<f64> = (0..rows * input).map(|_| normal(&mut r)).collect();
    let inputs = Matrix::from_vec(rows, input, data).unwrap();
    let groups: Vec<Group> = (0..entries)
        .map(|e| Group {
            rows: e * views..(e + 1) * views,
            label: r.random_range(0..classes),
        })
        .collect();
    let buffer_from = entries / 2;
    let stored = (buffer_from * views..rows)
        .map(|_| (0..classes).map(|_| normal(&mut r)).collect())
        .collect();
    let mut old_classes: Vec<usize> = (0..classes).filter(|_| r.random_bool(0.6)).collect();
    if old_classes.len() < 2 {
        old_classes = vec![0, 1];
    }
    GradProblem {
        net,
        inputs,
        groups,
        buffer_from,
        stored,
        teacher,
        old_classes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Supervised,
    /// Consistency loss with gradient through both views.
    Ssl,
    /// Consistency loss with the weak-view distribution held fixed.
    SslDetached,
    SupervisedPlusSsl,
    Derpp,
    Lwf,
}

pub const OBJECTIVES: [Objective; 6] = [
    Objective::Supervised,
    Objective::Ssl,
    Objective::SslDetached,
    Objective::SupervisedPlusSsl,
    Objective::Derpp,
    Objective::Lwf,
];

const DERPP_ALPHA: f64 = 0.5;
const DERPP_BETA: f64 = 0.5;
const KD_TEMPERATURE: f64 = 2.0;

/// Objective value at `logits`, adding `∂/∂logits` into `grad` when given.
fn objective(
    p: &GradProblem,
    obj: Objective,
    logits: &Matrix,
    frozen_weak: Option<&Matrix>,
    mut grad: Option<&mut Matrix>,
) -> f64 {
    match obj {
        Objective::Supervised => supervised_term(logits, &p.groups, 1.0, grad).unwrap(),
        Objective::Ssl => ssl_term(logits, &p.groups, 1.0, true, grad).unwrap().value,
        Objective::SslDetached => match frozen_weak {
            // Value with the weak distributions frozen at their unperturbed values.
            Some(weak) => {
                let mut total = 0.0;
                let mut pairs = 0;
                for g in &p.groups {
                    let p1 = weak.row(g.rows.start);
                    for r in g.rows.clone().skip(1) {
                        let pj = softmax(logits.row(r), None).unwrap();
                        total += kl_divergence(p1, &pj).unwrap();
                        pairs += 1;
                    }
                }
                if pairs == 0 {
                    0.0
                } else {
                    total / pairs as f64
                }
            }
            None => ssl_term(logits, &p.groups, 1.0, false, grad).unwrap().value,
        },
        Objective::SupervisedPlusSsl => {
            let a = supervised_term(logits, &p.groups, 1.0, grad.as_deref_mut()).unwrap();
            a + ssl_term(logits, &p.groups, 1.0, true, grad).unwrap().value
        }
        Objective::Derpp => {
            let (cur, buf) = p.groups.split_at(p.buffer_from);
            let mut total = supervised_term(logits, cur, 1.0, grad.as_deref_mut()).unwrap();
            total +=
                DERPP_BETA * supervised_term(logits, buf, DERPP_BETA, grad.as_deref_mut()).unwrap();
            let rows: Vec<usize> = buf.iter().flat_map(|g| g.rows.clone()).collect();
            let stored: Vec<&[f64]> = p.stored.iter().map(Vec::as_slice).collect();
            total +=
                DERPP_ALPHA * logit_mse_term(logits, &rows, &stored, DERPP_ALPHA, grad).unwrap();
            total
        }
        Objective::Lwf => {
            let ce = supervised_term(logits, &p.groups, 1.0, grad.as_deref_mut()).unwrap();
            let rows: Vec<usize> = (0..logits.rows()).collect();
            let t = p.teacher.predict(&p.inputs).unwrap();
            ce + distillation_term(logits, &rows, &t, &p.old_classes, KD_TEMPERATURE, 1.0, grad)
                .unwrap()
        }
    }
}

/// Largest per-parameter relative error between backpropagated and finite-difference gradients.
pub fn max_relative_grad_error(p: &mut GradProblem, obj: Objective) -> f64 {
    let logits = p.net.forward(&p.inputs).unwrap();
    let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
    let detached = obj == Objective::SslDetached;
    objective(p, obj, &logits, None, Some(&mut dlogits));
    p.net.backward(&dlogits).unwrap();
    let analytic = p.net.grad_vec();

    let weak = {
        let mut m = Matrix::zeros(logits.rows(), logits.cols());
        for r in 0..logits.rows() {
            m.row_mut(r)
                .copy_from_slice(&softmax(logits.row(r), None).unwrap());
        }
        m
    };
    let frozen = detached.then_some(&weak);
    let base = p.net.params();
    let mut worst: f64 = 0.0;
    let mut theta = base.clone();
    for k in 0..base.len() {
        theta[k] = base[k] + FD_STEP;
        p.net.set_params(&theta).unwrap();
        let up = objective(p, obj, &p.net.predict(&p.inputs).unwrap(), frozen, None);
        theta[k] = base[k] - FD_STEP;
        p.net.set_params(&theta).unwrap();
        let down = objective(p, obj, &p.net.predict(&p.inputs).unwrap(), frozen, None);
        theta[k] = base[k];
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(err);
    }
    p.net.set_params(&base).unwrap();
    worst
}

pub fn check_gradients(draws: u64) -> Check {
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    for d in 0..draws {
        let mut p = grad_problem(d);
        for obj in OBJECTIVES {
            let e = max_relative_grad_error(&mut p, obj);
            let key = match obj {
                Objective::Supervised => "sup",
                Objective::Ssl => "ssl",
                Objective::SslDetached => "ssl(detached)",
                Objective::SupervisedPlusSsl => "sup+ssl",
                Objective::Derpp => "der++",
                Objective::Lwf => "lwf",
            };
            let w = worst.entry(key).or_insert(0.0);
            *w = w.max(e);
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Check::new(
        1,
        "gradient oracle",
        max < GRAD_TOLERANCE,
        format!(
            "{draws} draws, max rel err {max:.2e} (< {GRAD_TOLERANCE:e}); {}",
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. View-batch wrapper with one view reduces to the baseline
// ---------------------------------------------------------------------------

pub const REDUCTION_TOLERANCE: f64 = 1e-12;

/// A small separable class-split stream with `tasks` tasks of two classes.
pub fn toy_stream(seed: u64, tasks: usize, protocol: Protocol) -> TaskStream {
    let mut r = rng(seed);
    let dim = 6;
    let classes = 2 * tasks;
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 1.5 * normal(&mut r)).collect())
        .collect();
    let mut id = 0u64;
    let mut out = Vec::new();
    for t in 0..tasks {
        let mut task = Task {
            train: Vec::new(),
            test: Vec::new(),
            classes: vec![2 * t, 2 * t + 1],
        };
        for &c in &task.classes.clone() {
            for k in 0..30 {
                let x: Vec<f64> = means[c].iter().map(|m| m + normal(&mut r)).collect();
                let s = Sample::vector(x, c, t, id);
                id += 1;
                if k < 20 {
                    task.train.push(s);
                } else {
                    task.test.push(s);
                }
            }
        }
        out.push(task);
    }
    TaskStream::new(protocol, out, classes, None).unwrap()
}

pub fn toy_learner(method: MethodName, vbm: bool, views: usize, seed: u64) -> LearnerConfig {
    let mut train = TrainConfig::new(3, 8, views, 0.02);
    train.momentum = 0.9;
    train.seed = seed;
    train.ssl_enabled = false;
    train.strong_aug_enabled = false;
    let (capacity, policy) = match method {
        MethodName::Er => (24, BufferPolicy::Reservoir),
        MethodName::Derpp => (24, BufferPolicy::Reservoir),
        MethodName::Icarl => (24, BufferPolicy::Herding),
        _ => (0, BufferPolicy::Reservoir),
    };
    LearnerConfig {
        method: MethodSpec::new(method).with_vbm(vbm),
        train,
        network: NetworkSpec {
            hidden: vec![16],
            activation: Activation::Relu,
        },
        weak: AugPolicy {
            noise_sigma: 0.1,
            ..AugPolicy::identity(AugKind::Weak)
        },
        strong: AugPolicy::default_strong(),
        buffer: BufferSpec { capacity, policy },
        diagnostics: false,
    }
}

#[derive(Default)]
pub struct LossLog(pub Vec<StepLoss>);

impl StepObserver for LossLog {
    fn on_step(&mut self, _task: usize, _batch: &ViewBatch, _logits: &Matrix, loss: &StepLoss) {
        self.0.push(*loss);
    }
}

pub const ALL_METHODS: [MethodName; 6] = [
    MethodName::Finetune,
    MethodName::Joint,
    MethodName::Er,
    MethodName::Derpp,
    MethodName::Lwf,
    MethodName::Icarl,
];

/// Largest per-step loss difference between the one-view wrapper and the baseline.
pub fn reduction_gap(method: MethodName, seed: u64) -> (usize, f64, bool) {
    let stream = toy_stream(seed, 3, Protocol::Cil);
    let mut base = LossLog::default();
    let mut wrapped = LossLog::default();
    let a = run_stream(
        &stream,
        toy_learner(method, false, 1, seed),
        Some(&mut base),
    )
    .unwrap();
    let b = run_stream(
        &stream,
        toy_learner(method, true, 1, seed),
        Some(&mut wrapped),
    )
    .unwrap();
    let same_len = base.0.len() == wrapped.0.len();
    let gap = base
        .0
        .iter()
        .zip(&wrapped.0)
        .flat_map(|(x, y)| {
            [
                (x.total - y.total).abs(),
                (x.supervised - y.supervised).abs(),
                (x.ssl - y.ssl).abs(),
                (x.extra - y.extra).abs(),
            ]
        })
        .fold(0.0, f64::max);
    (base.0.len(), gap, same_len && a.accuracy == b.accuracy)
}

pub fn check_reduction() -> Check {
    let mut parts = Vec::new();
    let mut pass = true;
    for m in ALL_METHODS {
        let (steps, gap, same) = reduction_gap(m, 7);
        pass &= same && gap <= REDUCTION_TOLERANCE && steps > 0;
        parts.push(format!(
            "{m} {steps} steps gap {gap:.1e}{}",
            if same { "" } else { " MISMATCH" }
        ));
    }
    Check::new(
        2,
        "exact reduction at V=1",
        pass,
        format!("tolerance {REDUCTION_TOLERANCE:e}; {}", parts.join(", ")),
    )
}

// ---------------------------------------------------------------------------
// 3-4. Scheduler laws
// ---------------------------------------------------------------------------

pub fn plain_pool(n: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| Sample::vector(vec![i as f64 + 1.0], i % 5, 0, i as u64))
        .collect()
}

pub fn plain_augmenter() -> Augmenter {
    Augmenter::new(
        AugPolicy::identity(AugKind::Weak),
        AugPolicy::identity(AugKind::Strong),
        true,
        None,
    )
    .unwrap()
}

/// Drives a schedule over a pool of `n` samples; returns the batches and epoch ends seen.
pub fn drive(
    n: usize,
    cfg: &TrainConfig,
    log: bool,
) -> (Vec<ViewBatch>, usize, vbm_core::scheduler::Schedule) {
    let pool = plain_pool(n);
    let aug = plain_augmenter();
    let mut streams = RunStreams::new(SeedTree::new(cfg.seed));
    let mut s = build_schedule(n, cfg).unwrap();
    if log {
        s = s.with_log();
    }
    let empty: Vec<Sample> = Vec::new();
    let mut batches = Vec::new();
    let mut epochs = 0;
    loop {
        match s
            .next_view_batch(&pool, &empty, &aug, &mut streams)
            .unwrap()
        {
            Step::Batch(b) => batches.push(b),
            Step::EpochEnd(_) => epochs += 1,
            Step::Finished => break,
        }
    }
    (batches, epochs, s)
}

pub fn mean_recall(n: usize, batch: usize, views: usize, epochs: usize, seed: u64) -> f64 {
    let mut cfg = TrainConfig::new(epochs, batch, views, 0.1);
    cfg.seed = seed;
    let (_, _, s) = drive(n, &cfg, true);
    measure_recall_interval(s.log().unwrap()).unwrap().mean
}

pub fn check_recall_law() -> Check {
    let (batch, steps, epochs) = (60, 5, 60);
    let n = batch * steps;
    let conventional = mean_recall(n, batch, 1, epochs, 11);
    let mut pass = conventional == n as f64;
    let mut parts = vec![format!("V=1 {conventional}")];
    for v in 2..=5 {
        let m = mean_recall(n, batch, v, epochs, 11);
        pass &= m == v as f64 * conventional;
        parts.push(format!("V={v} {m} (expect {})", v as f64 * conventional));
    }
    Check::new(
        3,
        "recall-interval law",
        pass,
        format!("N={n}, B={batch}, exact equality; {}", parts.join(", ")),
    )
}

/// Twenty (N, B, V, epochs) points with B divisible by V, covering N mod B ≠ 0
/// and epoch counts that V does not divide.
pub fn budget_grid() -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    let ns = [37, 120, 250, 301, 96];
    let combos = [(12, 2, 7), (12, 3, 10), (20, 4, 9), (30, 5, 12)];
    for &n in &ns {
        for &(b, v, e) in &combos {
            out.push((n, b, v, e));
        }
    }
    out
}

/// (view-batch presentations, conventional presentations, batch size) per grid point.
pub fn budget_points() -> Vec<((usize, usize, usize, usize), usize, usize)> {
    budget_grid()
        .into_iter()
        .map(|(n, b, v, e)| {
            let vb: usize = drive(n, &TrainConfig::new(e, b, v, 0.1), false)
                .0
                .iter()
                .map(ViewBatch::presentations)
                .sum();
            let conv: usize = drive(n, &TrainConfig::new(e, b, 1, 0.1), false)
                .0
                .iter()
                .map(ViewBatch::presentations)
                .sum();
            ((n, b, v, e), vb, conv)
        })
        .collect()
}

pub fn check_budget() -> Check {
    let pts = budget_points();
    let mut worst = 0usize;
    let mut pass = pts.len() == 20;
    for &((_, b, _, _), vb, conv) in &pts {
        let d = vb.abs_diff(conv);
        worst = worst.max(d);
        pass &= d <= b;
    }
    Check::new(
        4,
        "presentation budget",
        pass,
        format!(
            "{} grid points, largest |view-batch − conventional| = {worst} presentations (≤ B)",
            pts.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 5-8. Desk benchmark
// ---------------------------------------------------------------------------

pub const DESK_CONFIG: &str = include_str!("../../../../configs/desk-er.json");

pub fn desk() -> ExperimentConfig {
    ExperimentConfig::from_json(DESK_CONFIG).unwrap()
}

pub fn with_views(mut c: ExperimentConfig, v: usize) -> ExperimentConfig {
    c.train.views = v;
    c.name = Some(format!("{}/V={v}", c.name.clone().unwrap_or_default()));
    c
}

/// Per-seed statistics of one configuration.
pub struct Arm {
    pub label: String,
    pub records: Vec<RunRecord>,
}

impl Arm {
    pub fn run(label: impl Into<String>, cfg: &ExperimentConfig) -> Self {
        Self {
            label: label.into(),
            records: run(cfg).unwrap(),
        }
    }

    fn stat(&self, f: impl Fn(&RunRecord) -> Option<f64>) -> MeanStd {
        let v: Vec<f64> = self.records.iter().filter_map(f).collect();
        MeanStd::of(&v)
    }

    pub fn last(&self) -> MeanStd {
        self.stat(|r| Some(r.metrics.last))
    }

    pub fn avg(&self) -> MeanStd {
        self.stat(|r| Some(r.metrics.avg))
    }

    pub fn forgetting(&self) -> MeanStd {
        self.stat(|r| r.metrics.forgetting)
    }

    pub fn dof(&self) -> MeanStd {
        self.stat(|r| r.metrics.degree_of_forgetting)
    }

    pub fn cil_til(&self) -> MeanStd {
        self.stat(|r| r.metrics.avg_cil_til)
    }
}

pub fn fmt_ms(m: &MeanStd) -> String {
    format!("{:.4}±{:.4}", m.mean, m.std)
}

pub struct DeskRuns {
    /// View-batch runs at V = 1..=5.
    pub by_view: Vec<Arm>,
    pub baseline: Arm,
    pub replay_only: Arm,
    pub class_variant: Arm,
}

pub const DESK_FACTOR_VIEWS: usize = 3;

pub fn desk_runs() -> DeskRuns {
    let base = desk();
    let by_view = (1..=5)
        .map(|v| Arm::run(format!("V={v}"), &with_views(base.clone(), v)))
        .collect();
    let mut baseline = base.clone();
    baseline.method.vbm = false;
    baseline.name = Some("desk-er/baseline".into());
    let mut replay = with_views(base.clone(), DESK_FACTOR_VIEWS);
    replay.train.ssl_enabled = false;
    replay.train.strong_aug_enabled = false;
    replay.name = Some("desk-er/replay".into());
    let mut class = with_views(base, DESK_FACTOR_VIEWS);
    class.train.variant = vbm_core::Variant::Class;
    class.name = Some("desk-er/class".into());
    DeskRuns {
        by_view,
        baseline: Arm::run("baseline", &baseline),
        replay_only: Arm::run("replay", &replay),
        class_variant: Arm::run("class", &class),
    }
}

pub fn check_spacing_effect(d: &DeskRuns) -> Check {
    let v1 = d.by_view[0].last();
    let f1 = d.by_view[0].forgetting();
    let mut pass = false;
    let mut parts = vec![format!("V=1 last {}", fmt_ms(&v1))];
    let mut best = (1usize, v1.mean);
    for v in [3usize, 4] {
        let s = d.by_view[v - 1].last();
        let se = s.pooled_standard_error(&v1);
        let ok = s.mean - v1.mean > se;
        parts.push(format!(
            "V={v} last {} (Δ {:+.4}, SE {se:.4})",
            fmt_ms(&s),
            s.mean - v1.mean
        ));
        pass |= ok;
    }
    for v in 1..=5 {
        let m = d.by_view[v - 1].last().mean;
        if m > best.1 {
            best = (v, m);
        }
    }
    let fb = d.by_view[best.0 - 1].forgetting();
    let forgets_less = fb.mean < f1.mean;
    parts.push(format!(
        "best V={} forgetting {:.4} vs V=1 {:.4}",
        best.0, fb.mean, f1.mean
    ));
    Check::new(
        5,
        "directional spacing effect",
        pass && forgets_less,
        parts.join("; "),
    )
}

pub fn check_dof_monotone(d: &DeskRuns) -> Check {
    let vals: Vec<f64> = [1usize, 3, 5]
        .iter()
        .map(|&v| d.by_view[v - 1].dof().mean)
        .collect();
    let pass = vals[0] < vals[1] && vals[1] < vals[2];
    Check::new(
        6,
        "degree of forgetting increases with V",
        pass,
        format!(
            "Δ_r at V=1,3,5: {:.3e} < {:.3e} < {:.3e}",
            vals[0], vals[1], vals[2]
        ),
    )
}

pub fn check_factors(d: &DeskRuns) -> Check {
    let base = d.baseline.cil_til();
    let replay = d.replay_only.cil_til();
    let full = d.by_view[DESK_FACTOR_VIEWS - 1].cil_til();
    let se1 = replay.pooled_standard_error(&base);
    let se2 = full.pooled_standard_error(&replay);
    let ok1 = replay.mean - base.mean > se1;
    let ok2 = full.mean - replay.mean > se2;
    Check::new(
        7,
        "factor analysis",
        ok1 && ok2,
        format!(
            "Avg(CIL,TIL) baseline {}, +replay {} (Δ {:+.4}, SE {se1:.4}, {}), +replay+SSL {} (Δ {:+.4}, SE {se2:.4}, {})",
            fmt_ms(&base),
            fmt_ms(&replay),
            replay.mean - base.mean,
            if ok1 { "ok" } else { "not met" },
            fmt_ms(&full),
            full.mean - replay.mean,
            if ok2 { "ok" } else { "not met" },
        ),
    )
}

pub fn check_variants(d: &DeskRuns) -> Check {
    let s = &d.by_view[DESK_FACTOR_VIEWS - 1];
    let c = &d.class_variant;
    let (ds, dc) = (s.dof().mean, c.dof().mean);
    let (as_, ac) = (s.avg().mean, c.avg().mean);
    let ok_dof = dc > ds;
    let ok_acc = ac < as_;
    Check::new(
        8,
        "sample- vs class-based view batches",
        ok_dof && ok_acc,
        format!(
            "Δ_r class {dc:.3e} vs sample {ds:.3e} ({}); avg class {ac:.4} vs sample {as_:.4} ({})",
            if ok_dof { "ok" } else { "not met" },
            if ok_acc { "ok" } else { "not met" },
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. Spacing model
// ---------------------------------------------------------------------------

pub const SPACING_GRID_STEP: f64 = 1e-3;

/// Grid-search argmin of the decay rate over `[0, hi]` at [`SPACING_GRID_STEP`].
pub fn grid_argmin(c: f64, d: f64, hi: f64) -> f64 {
    let steps = (hi / SPACING_GRID_STEP).round() as usize;
    let mut best = (0.0, f64::INFINITY);
    for k in 0..=steps {
        let i = k as f64 * SPACING_GRID_STEP;
        let s = decay_rate(i, c, d);
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0
}

pub fn check_spacing_model() -> Check {
    let mut worst_argmin: f64 = 0.0;
    let mut worst_floor: f64 = 0.0;
    let mut pass = true;
    let mut cases = 0;
    for &c in &[0.1, 0.4, 1.0, 3.0] {
        for &d in &[0.2, 0.7, 1.0, 1.6, 2.3] {
            let star = optimal_interval(c, d);
            let grid = grid_argmin(c, d, star * 2.0 + 1.0);
            worst_argmin = worst_argmin.max((grid - star).abs());
            worst_floor = worst_floor.max((decay_rate(star, c, d) - 1.0).abs());
            let p = SpacingParams::new(0.9, 0.5, c, d).unwrap();
            pass &= retention(0.0, &p, 2.0) == p.a;
            let mut prev = f64::INFINITY;
            for k in 0..=400 {
                let r = retention(k as f64 * 0.25, &p, 2.0);
                pass &= r <= prev;
                prev = r;
            }
            cases += 1;
        }
    }
    pass &= worst_argmin <= SPACING_GRID_STEP && worst_floor <= 1e-12;
    Check::new(
        9,
        "spacing-model analytics",
        pass,
        format!(
            "{cases} (c, d) pairs: |argmin − (e^d − 1)| ≤ {worst_argmin:.1e} (grid {SPACING_GRID_STEP:e}), |S(I*) − 1| ≤ {worst_floor:.1e}, R(0) = A, R monotone"
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Metrics against brute-force reimplementations
// ---------------------------------------------------------------------------

pub const METRIC_TOLERANCE: f64 = 1e-12;

pub fn random_matrix<R: Rng>(r: &mut R) -> AccuracyMatrix {
    let t = r.random_range(1..9);
    let rows = (0..t)
        .map(|j| (0..=j).map(|_| r.random::<f64>()).collect())
        .collect();
    AccuracyMatrix::from_rows(rows).unwrap()
}

pub fn brute_avg(rows: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for row in rows {
        let mut inner = 0.0;
        for v in row {
            inner += v;
        }
        s += inner / row.len() as f64;
    }
    s / rows.len() as f64
}

pub fn brute_last(rows: &[Vec<f64>]) -> f64 {
    let r = &rows[rows.len() - 1];
    r.iter().sum::<f64>() / r.len() as f64
}

pub fn brute_forgetting(rows: &[Vec<f64>]) -> f64 {
    let t = rows.len();
    let mut total = 0.0;
    for j in 0..t - 1 {
        let mut best = f64::NEG_INFINITY;
        for row in rows.iter().take(t - 1).skip(j) {
            if row[j] > best {
                best = row[j];
            }
        }
        total += best - rows[t - 1][j];
    }
    total / (t - 1) as f64
}

pub fn brute_dof(values: &[f64], tol: f64) -> f64 {
    let e = values.len();
    let fin = values[e - 1];
    // Smallest start from which every value is within `tol` of the final one.
    let mut start = e - 1;
    for s in (0..e).rev() {
        if values[s..].iter().all(|v| (v - fin).abs() <= tol) {
            start = s;
        } else {
            break;
        }
    }
    let start = start.min(e - 2);
    let inc = &values[start..];
    let mean = inc.iter().sum::<f64>() / inc.len() as f64;
    inc.iter().map(|v| (mean - v) * (mean - v)).sum::<f64>() / inc.len() as f64
}

/// Largest disagreement across 1000 random matrices and traces.
pub fn metrics_disagreement(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = random_matrix(&mut r);
        let rows = m.rows().to_vec();
        worst = worst.max((avg_accuracy(&m).unwrap() - brute_avg(&rows)).abs());
        worst = worst.max((last_accuracy(&m).unwrap() - brute_last(&rows)).abs());
        if rows.len() >= 2 {
            worst = worst.max((forgetting(&m).unwrap() - brute_forgetting(&rows)).abs());
        }
        let e = r.random_range(2..20);
        let level: f64 = r.random();
        let values: Vec<f64> = (0..e)
            .map(|_| (level + 0.05 * normal(&mut r)).clamp(0.0, 1.0))
            .collect();
        let got = degree_of_forgetting(&RetentionTrace::new(values.clone())).unwrap();
        worst = worst.max((got - brute_dof(&values, SATURATION_TOLERANCE)).abs());
    }
    worst
}

pub fn check_metrics() -> Check {
    let worst = metrics_disagreement(10, 1000);
    Check::new(
        10,
        "metrics oracle",
        worst <= METRIC_TOLERANCE,
        format!("1000 matrices and traces, max |diff| {worst:.1e} (≤ {METRIC_TOLERANCE:e})"),
    )
}

// ---------------------------------------------------------------------------
// 11. Replay-buffer statistics
// ---------------------------------------------------------------------------

pub const CHI_SQUARE_ALPHA: f64 = 0.01;

/// Inclusion counts of each of `n` stream items in a reservoir of `capacity` over `trials` runs.
pub fn reservoir_counts(n: usize, capacity: usize, trials: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let mut counts = vec![0usize; n];
    for _ in 0..trials {
        let mut buf = ReplayBuffer::new(capacity, BufferPolicy::Reservoir);
        for i in 0..n {
            buf.insert_reservoir(Sample::vector(vec![0.0], 0, 0, i as u64), None, &mut r);
        }
        for e in buf.entries() {
            counts[e.sample.sample_id as usize] += 1;
        }
    }
    counts
}

/// Pearson chi-square p-value of the counts against a uniform expectation.
pub fn uniform_p_value(counts: &[usize]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Distance between the mean of a full herding selection and the population mean.
pub fn herding_full_mean_error(seed: u64) -> (bool, f64) {
    let mut r = rng(seed);
    let n = 40;
    let feats: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..8).map(|_| normal(&mut r)).collect())
        .collect();
    let picked = buffer_select_herding(&feats, n).unwrap();
    let mut sorted = picked.clone();
    sorted.sort_unstable();
    let permutation = sorted == (0..n).collect::<Vec<_>>();
    let mean = |idx: &[usize]| -> Vec<f64> {
        let mut m = vec![0.0; 8];
        for &i in idx {
            for (a, b) in m.iter_mut().zip(&feats[i]) {
                *a += b / idx.len() as f64;
            }
        }
        m
    };
    let all: Vec<usize> = (0..n).collect();
    let err = mean(&picked)
        .iter()
        .zip(mean(&all))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (permutation, err)
}

pub fn check_buffer() -> Check {
    let counts = reservoir_counts(20, 5, 10_000, 21);
    let p = uniform_p_value(&counts);
    let (perm, err) = herding_full_mean_error(5);
    Check::new(
        11,
        "buffer statistics",
        p > CHI_SQUARE_ALPHA && perm && err <= 1e-12,
        format!(
            "reservoir chi-square p = {p:.3} (> {CHI_SQUARE_ALPHA}); herding m = population selects every sample, mean error {err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 12. Determinism
// ---------------------------------------------------------------------------

pub fn small_config(method: &str, vbm: bool) -> ExperimentConfig {
    let (capacity, policy) = match method {
        "er" | "derpp" => (40, "reservoir"),
        "icarl" => (40, "herding"),
        _ => (0, "reservoir"),
    };
    ExperimentConfig::from_json(&format!(
        r#"{{
            "name": "small-{method}",
            "dataset": {{"generator": "split-gaussians", "classes": 6, "dim": 8,
                         "train_per_class": 30, "test_per_class": 10, "separation": 3.0}},
            "stream": {{"protocol": "cil", "tasks": 3, "classes_per_task": 2}},
            "method": {{"name": "{method}", "vbm": {vbm}}},
            "train": {{"base_epochs": 4, "batch_size": 12, "views": 2, "learning_rate": 0.02,
                       "momentum": 0.9, "ssl_enabled": true}},
            "network": {{"hidden": [16]}},
            "buffer": {{"capacity": {capacity}, "policy": "{policy}"}},
            "seeds": [3]
        }}"#
    ))
    .unwrap()
}

pub fn check_determinism() -> Check {
    let mut pass = true;
    let mut n = 0;
    for m in ["finetune", "er", "derpp", "lwf", "icarl", "joint"] {
        for vbm in [false, true] {
            let cfg = small_config(m, vbm);
            let a = run_seed(&cfg, 3).unwrap().deterministic_json().unwrap();
            let b = run_seed(&cfg, 3).unwrap().deterministic_json().unwrap();
            pass &= a == b;
            n += 1;
        }
    }
    Check::new(
        12,
        "determinism",
        pass,
        format!("{n} configurations run twice, RunRecord JSON byte-identical: {pass}"),
    )
}
