// SPDX-License-Identifier: Apache-2.0

//! Accuracy aggregates, the average-forgetting measure, and the
//! degree-of-forgetting statistic over per-epoch retention traces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower-triangular grid: `row(j)[t]` is the accuracy on task `t` after training task `j`
/// (both 0-based here; reports use 1-based labels).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    /// Appends the row for the next training step; it must cover every task seen so far.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let expect = self.rows.len() + 1;
        if row.len() != expect {
            return Err(Error::Dimension(format!(
                "step {expect} needs {expect} task accuracies, got {}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Argument(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, step: usize, task: usize) -> Option<f64> {
        self.rows.get(step).and_then(|r| r.get(task)).copied()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean over steps of the mean accuracy over tasks seen at that step.
pub fn avg_accuracy(m: &AccuracyMatrix) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::Argument("empty accuracy matrix".into()));
    }
    Ok(mean(&m.rows.iter().map(|r| mean(r)).collect::<Vec<_>>()))
}

/// Mean accuracy over all tasks after the final step.
pub fn last_accuracy(m: &AccuracyMatrix) -> Result<f64> {
    m.rows
        .last()
        .map(|r| mean(r))
        .ok_or_else(|| Error::Argument("empty accuracy matrix".into()))
}

/// Average over earlier tasks of (best accuracy before the final step − final accuracy).
pub fn forgetting(m: &AccuracyMatrix) -> Result<f64> {
    let t = m.tasks();
    if t < 2 {
        return Err(Error::Argument(
            "forgetting needs at least two tasks".into(),
        ));
    }
    let last = &m.rows[t - 1];
    let total: f64 = (0..t - 1)
        .map(|task| {
            let best = m.rows[task..t - 1]
                .iter()
                .map(|r| r[task])
                .fold(f64::NEG_INFINITY, f64::max);
            best - last[task]
        })
        .sum();
    Ok(total / (t - 1) as f64)
}

/// End-of-epoch accuracy on the task being trained, one value per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionTrace {
    pub values: Vec<f64>,
    /// Explicit saturation epoch; [`saturation_epoch`] is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saturation: Option<usize>,
}

impl RetentionTrace {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            saturation: None,
        }
    }

    pub fn epochs(&self) -> usize {
        self.values.len()
    }
}

/// Tolerance used by [`saturation_epoch`]: two accuracy points.
pub const SATURATION_TOLERANCE: f64 = 0.02;

/// First epoch from which every later value stays within `tol` of the final one,
/// capped so that at least two epochs remain included.
pub fn saturation_epoch(values: &[f64], tol: f64) -> usize {
    let Some(&fin) = values.last() else {
        return 0;
    };
    let mut first = values.len() - 1;
    while first > 0 && (values[first - 1] - fin).abs() <= tol {
        first -= 1;
    }
    first.min(values.len().saturating_sub(2))
}

/// Population variance of the retention values from the saturation epoch to the end.
pub fn degree_of_forgetting(trace: &RetentionTrace) -> Result<f64> {
    let e = trace.epochs();
    let start = trace
        .saturation
        .unwrap_or_else(|| saturation_epoch(&trace.values, SATURATION_TOLERANCE));
    if start >= e || e - start < 2 {
        return Err(Error::Argument(format!(
            "degree of forgetting needs two epochs from epoch {start}, trace has {e}"
        )));
    }
    // Shifted by the first included value so a constant trace gives exactly zero.
    let included = &trace.values[start..];
    let k = included[0];
    let n = included.len() as f64;
    let s: f64 = included.iter().map(|r| r - k).sum();
    let ss: f64 = included.iter().map(|r| (r - k) * (r - k)).sum();
    Ok((ss - s * s / n).max(0.0) / n)
}

/// Accuracies on every seen task, measured at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEval {
    pub task: usize,
    pub epoch: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecaySeries {
    pub task: usize,
    /// (training task, epoch, accuracy) from the task's first epoch onward.
    pub points: Vec<(usize, usize, f64)>,
}

/// Per-task accuracy series across all later epochs, for memory-retention decay plots.
pub fn retention_decay_summary(evals: &[EpochEval]) -> Vec<DecaySeries> {
    let tasks = evals.iter().map(|e| e.task + 1).max().unwrap_or(0);
    (0..tasks)
        .map(|t| DecaySeries {
            task: t,
            points: evals
                .iter()
                .filter(|e| e.task >= t)
                .filter_map(|e| e.accuracies.get(t).map(|&a| (e.task, e.epoch, a)))
                .collect(),
        })
        .collect()
}

/// Sample mean and (n−1) standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let m = mean(values);
        let std = if n > 1 {
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, std, n }
    }

    pub fn standard_error(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }

    /// Standard error of the difference of two independent means.
    pub fn pooled_standard_error(&self, other: &MeanStd) -> f64 {
        (self.std * self.std / self.n as f64 + other.std * other.std / other.n as f64).sqrt()
    }
}
