// SPDX-License-Identifier: Apache-2.0

//! View-batch replay for continual learning.
//!
//! The crate bundles a small dense network with hand-written gradients, the
//! weak/strong augmentation pipeline, conventional and view-batch schedulers,
//! rehearsal and distillation baselines, continual-learning metrics, the
//! spacing-effect forgetting curve, and the experiment runner behind the `vbm`
//! command-line tool.

pub mod augment;
pub mod continual;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod scheduler;
pub mod spacing;

pub use augment::{AugKind, AugPolicy, Augmenter, ImageShape, Sample};
pub use continual::{
    evaluate, run_stream, BufferPolicy, BufferSpec, Learner, LearnerConfig, MethodName, MethodSpec,
    NetworkSpec, Protocol, StepLoss, StepObserver, StreamResult, Task, TaskStream,
};
pub use error::{Error, Result};
pub use io::{
    generate_dataset, report, run, run_seed, sweep, Aggregate, DatasetSpec, ExperimentConfig,
    RunRecord, StreamSpec, SweepAxis,
};
pub use metrics::{AccuracyMatrix, MeanStd, RetentionTrace};
pub use nn::{Activation, Matrix, Network, OptimizerState};
pub use rng::{RunStreams, SeedTree};
pub use scheduler::{ScheduleMode, TrainConfig, Variant};
pub use spacing::{CurveSeries, SpacingParams};
