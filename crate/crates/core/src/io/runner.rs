// SPDX-License-Identifier: Apache-2.0

//! Running configurations, sweeping one axis, and persisting run records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::generate_dataset;
use crate::continual::{run_stream, MethodName, Protocol};
use crate::error::{Error, Result};
use crate::metrics::{
    avg_accuracy, degree_of_forgetting, forgetting, last_accuracy, retention_decay_summary,
    AccuracyMatrix, DecaySeries, EpochEval, MeanStd, RetentionTrace,
};
use crate::rng::{SeedTree, DATA};
use crate::scheduler::{RecallStats, ScheduleSummary, Variant};

/// Environment variable naming the directory under which runs are written.
pub const OUTPUT_ROOT_ENV: &str = "VBM_OUTPUT_ROOT";

/// Directory used when [`OUTPUT_ROOT_ENV`] is unset.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub avg: f64,
    pub last: f64,
    /// Undefined for single-task streams.
    pub forgetting: Option<f64>,
    /// Mean over tasks of the degree of forgetting of the task's retention trace.
    pub degree_of_forgetting: Option<f64>,
    /// Task-aware accuracies for class-split streams.
    pub til_avg: Option<f64>,
    pub til_last: Option<f64>,
    /// Mean of the final class-incremental and task-incremental accuracies.
    pub avg_cil_til: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    /// Hash shared with the matching baseline configuration.
    pub pairing_key: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub protocol: Protocol,
    pub accuracy: AccuracyMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub til_accuracy: Option<AccuracyMatrix>,
    pub metrics: RunMetrics,
    pub retention: Vec<RetentionTrace>,
    /// Degree of forgetting per task; `None` where the trace is too short.
    pub degree_of_forgetting: Vec<Option<f64>>,
    pub epoch_evals: Vec<EpochEval>,
    pub decay: Vec<DecaySeries>,
    pub schedules: Vec<ScheduleSummary>,
    /// Measured recall interval per task, when diagnostics are on.
    pub recall_intervals: Vec<Option<RecallStats>>,
    pub wall_time_ms: u64,
}

impl RunRecord {
    pub fn method(&self) -> MethodName {
        self.config.method.name
    }

    pub fn vbm(&self) -> bool {
        self.config.method.vbm
    }

    /// Pretty JSON with the wall time zeroed; identical for identical config and seed.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_time_ms = 0;
        Ok(serde_json::to_string_pretty(&r)?)
    }

    pub fn file_name(&self) -> String {
        format!("{}-seed{}.record.json", &self.config_hash[..12], self.seed)
    }
}

/// Trains and evaluates one seed of `config`.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let stream = generate_dataset(
        &config.dataset,
        &config.stream,
        &mut SeedTree::new(seed).stream(DATA),
    )?;
    let result = run_stream(&stream, config.learner_config(seed), None)?;
    let acc = &result.accuracy;
    let dof: Vec<Option<f64>> = result
        .tasks
        .iter()
        .map(|t| degree_of_forgetting(&t.retention).ok())
        .collect();
    let defined: Vec<f64> = dof.iter().flatten().copied().collect();
    let til_last = result
        .til_accuracy
        .as_ref()
        .map(last_accuracy)
        .transpose()?;
    let last = last_accuracy(acc)?;
    let metrics = RunMetrics {
        avg: avg_accuracy(acc)?,
        last,
        forgetting: (acc.tasks() > 1).then(|| forgetting(acc)).transpose()?,
        degree_of_forgetting: (!defined.is_empty())
            .then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        til_avg: result.til_accuracy.as_ref().map(avg_accuracy).transpose()?,
        til_last,
        avg_cil_til: til_last.map(|t| (last + t) / 2.0),
    };
    let epoch_evals: Vec<EpochEval> = result
        .tasks
        .iter()
        .flat_map(|t| t.epoch_evals.iter().cloned())
        .collect();
    let mut cfg = config.clone();
    cfg.seeds = vec![seed];
    Ok(RunRecord {
        config_hash: config.config_hash(),
        pairing_key: config.pairing_key(),
        seed,
        protocol: result.protocol,
        accuracy: result.accuracy.clone(),
        til_accuracy: result.til_accuracy.clone(),
        metrics,
        retention: result.tasks.iter().map(|t| t.retention.clone()).collect(),
        degree_of_forgetting: dof,
        decay: retention_decay_summary(&epoch_evals),
        epoch_evals,
        schedules: result.tasks.iter().map(|t| t.schedule.clone()).collect(),
        recall_intervals: result
            .tasks
            .iter()
            .map(|t| t.schedule.recall_interval.clone())
            .collect(),
        wall_time_ms: start.elapsed().as_millis() as u64,
        config: cfg,
    })
}

/// Runs every (config, seed) pair in parallel; records come back sorted by
/// (config hash, seed).
pub fn run_many(configs: &[ExperimentConfig]) -> Result<Vec<RunRecord>> {
    for c in configs {
        c.validate()?;
    }
    let jobs: Vec<(&ExperimentConfig, u64)> = configs
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut records = jobs
        .into_par_iter()
        .map(|(c, s)| run_seed(c, s))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| (&a.config_hash, a.seed).cmp(&(&b.config_hash, b.seed)));
    Ok(records)
}

pub fn run(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_many(std::slice::from_ref(config))
}

/// One swept parameter and its values.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    /// Parses `NAME=a..b` (inclusive integer range) or `NAME=v1,v2,...`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, values) = spec.split_once('=').ok_or_else(|| {
            Error::Config(format!("axis `{spec}` is not of the form NAME=VALUES"))
        })?;
        let values: Vec<String> = if let Some((a, b)) = values.split_once("..") {
            let lo: i64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad range start `{a}`")))?;
            let hi: i64 = b
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad range end `{b}`")))?;
            if lo > hi {
                return Err(Error::Config(format!("empty range {lo}..{hi}")));
            }
            (lo..=hi).map(|v| v.to_string()).collect()
        } else {
            values.split(',').map(|v| v.trim().to_string()).collect()
        };
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("axis `{spec}` has an empty value")));
        }
        let axis = Self {
            name: name.trim().to_string(),
            values,
        };
        axis.check_name()?;
        Ok(axis)
    }

    fn check_name(&self) -> Result<()> {
        match self.name.as_str() {
            "V" | "views" | "B" | "batch_size" | "epochs" | "base_epochs" | "lr"
            | "learning_rate" | "capacity" | "ssl" | "variant" | "vbm" => Ok(()),
            other => Err(Error::Config(format!(
                "unknown sweep axis `{other}`; expected one of V, B, epochs, lr, capacity, ssl, variant, vbm"
            ))),
        }
    }

    /// `config` with the axis set to `value`.
    pub fn apply(&self, config: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        fn num<T: std::str::FromStr>(axis: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("axis {axis}: cannot parse `{v}`")))
        }
        fn flag(axis: &str, v: &str) -> Result<bool> {
            match v {
                "1" | "true" | "on" => Ok(true),
                "0" | "false" | "off" => Ok(false),
                _ => Err(Error::Config(format!(
                    "axis {axis}: expected a boolean, got `{v}`"
                ))),
            }
        }
        let mut c = config.clone();
        let n = self.name.as_str();
        match n {
            "V" | "views" => c.train.views = num(n, value)?,
            "B" | "batch_size" => c.train.batch_size = num(n, value)?,
            "epochs" | "base_epochs" => c.train.base_epochs = num(n, value)?,
            "lr" | "learning_rate" => c.train.learning_rate = num(n, value)?,
            "capacity" => c.buffer.capacity = num(n, value)?,
            "ssl" => c.train.ssl_enabled = flag(n, value)?,
            "vbm" => c.method.vbm = flag(n, value)?,
            "variant" => {
                c.train.variant = serde_json::from_value(serde_json::Value::String(value.into()))
                    .map_err(|_| Error::Config(format!("axis variant: unknown value `{value}`")))?
            }
            _ => self.check_name()?,
        }
        if let Some(name) = &config.name {
            c.name = Some(format!("{name}/{}={value}", self.name));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn expand(&self, config: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
        self.values.iter().map(|v| self.apply(config, v)).collect()
    }
}

/// Runs `config` once per axis value. Every configuration is validated before
/// any training starts.
pub fn sweep(config: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<RunRecord>> {
    if matches!(axis.name.as_str(), "V" | "views" | "variant" | "ssl") && !config.method.vbm {
        return Err(Error::Config(format!(
            "sweeping {} has no effect unless method.vbm is true",
            axis.name
        )));
    }
    run_many(&axis.expand(config)?)
}

/// Mean and standard deviation of one configuration's metrics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub pairing_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub method: MethodName,
    pub vbm: bool,
    pub views: usize,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub avg: MeanStd,
    pub last: MeanStd,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forgetting: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree_of_forgetting: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_cil_til: Option<MeanStd>,
}

fn stat_of(values: Vec<Option<f64>>) -> Option<MeanStd> {
    let v: Option<Vec<f64>> = values.into_iter().collect();
    v.filter(|v| !v.is_empty()).map(|v| MeanStd::of(&v))
}

/// One aggregate per configuration hash, in hash order.
pub fn aggregate(records: &[RunRecord]) -> Vec<Aggregate> {
    let mut groups: std::collections::BTreeMap<&str, Vec<&RunRecord>> = Default::default();
    for r in records {
        groups.entry(r.config_hash.as_str()).or_default().push(r);
    }
    groups
        .into_values()
        .map(|mut rs| {
            rs.sort_by_key(|r| r.seed);
            let first = rs[0];
            let eff = first.config.method.effective_train(&first.config.train);
            Aggregate {
                config_hash: first.config_hash.clone(),
                pairing_key: first.pairing_key.clone(),
                name: first.config.name.clone(),
                method: first.method(),
                vbm: first.vbm(),
                views: eff.views,
                variant: eff.variant,
                seeds: rs.iter().map(|r| r.seed).collect(),
                avg: MeanStd::of(&rs.iter().map(|r| r.metrics.avg).collect::<Vec<_>>()),
                last: MeanStd::of(&rs.iter().map(|r| r.metrics.last).collect::<Vec<_>>()),
                forgetting: stat_of(rs.iter().map(|r| r.metrics.forgetting).collect()),
                degree_of_forgetting: stat_of(
                    rs.iter().map(|r| r.metrics.degree_of_forgetting).collect(),
                ),
                avg_cil_til: stat_of(rs.iter().map(|r| r.metrics.avg_cil_til).collect()),
            }
        })
        .collect()
}

/// Output root from [`OUTPUT_ROOT_ENV`], falling back to [`DEFAULT_OUTPUT_ROOT`].
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Directory for a configuration's outputs under `root`.
pub fn output_dir(root: &Path, config: &ExperimentConfig) -> PathBuf {
    match (&config.output_dir, &config.name) {
        (Some(d), _) => root.join(d),
        (None, Some(n)) => root.join(n.replace(['/', '\\'], "_")),
        (None, None) => root.join(format!("run-{}", &config.config_hash()[..12])),
    }
}

/// Writes one JSON file per record plus `aggregate.json` into `dir`.
pub fn write_records(dir: &Path, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(records.len() + 1);
    for r in records {
        let p = dir.join(r.file_name());
        std::fs::write(&p, serde_json::to_string_pretty(r)?)?;
        paths.push(p);
    }
    let p = dir.join("aggregate.json");
    std::fs::write(&p, serde_json::to_string_pretty(&aggregate(records))?)?;
    paths.push(p);
    Ok(paths)
}

/// Every `*.record.json` under `dir`, recursively, sorted by (config hash, seed).
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                pending.push(path);
            } else if path.to_string_lossy().ends_with(".record.json") {
                let text = std::fs::read_to_string(&path)?;
                let r: RunRecord = serde_json::from_str(&text)
                    .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
                out.push(r);
            }
        }
    }
    out.sort_by(|a, b| (&a.config_hash, a.seed).cmp(&(&b.config_hash, b.seed)));
    Ok(out)
}
