// SPDX-License-Identifier: Apache-2.0

//! Spacing-effect forgetting curve.
//!
//! Retention after elapsed time `t` is `R(t) = A (b t + 1)^(-S)`, where the decay
//! rate depends on the recall interval `I`: `S = 1 + c (ln(I + 1) - d)²`. The
//! decay rate bottoms out at `S = 1` for `I* = e^d - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacingParams {
    /// Retention right after learning, in (0, 1].
    pub a: f64,
    /// Time scale.
    pub b: f64,
    /// Curvature of the decay rate around the optimum.
    pub c: f64,
    /// Log of (optimal interval + 1).
    pub d: f64,
}

impl Default for SpacingParams {
    /// Illustrative values that give clearly separated short/optimal/long curves.
    fn default() -> Self {
        Self {
            a: 0.95,
            b: 0.2,
            c: 0.4,
            d: 4f64.ln(),
        }
    }
}

impl SpacingParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let p = Self { a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(Error::Config(format!(
                "A must lie in (0, 1], got {}",
                self.a
            )));
        }
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::Config(format!("b must be positive, got {}", self.b)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!(
                "c must be nonnegative, got {}",
                self.c
            )));
        }
        if !self.d.is_finite() {
            return Err(Error::Config("d must be finite".into()));
        }
        Ok(())
    }
}

pub fn decay_rate(interval: f64, c: f64, d: f64) -> f64 {
    let u = (interval + 1.0).ln() - d;
    1.0 + c * u * u
}

pub fn retention(t: f64, params: &SpacingParams, interval: f64) -> f64 {
    let s = decay_rate(interval, params.c, params.d);
    params.a * (params.b * t + 1.0).powf(-s)
}

pub fn optimal_interval(_c: f64, d: f64) -> f64 {
    d.exp() - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub interval: f64,
    pub times: Vec<f64>,
    pub retention: Vec<f64>,
}

impl CurveSeries {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.retention.windows(2))
            .map(|(t, r)| (t[1] - t[0]) * (r[0] + r[1]) / 2.0)
            .sum()
    }
}

/// Samples per unit of time in [`generate_curves`].
pub const SAMPLES_PER_UNIT: usize = 20;

/// One curve per interval over `[0, horizon]`.
///
/// With `repetitions > 1` the learner recalls `repetitions - 1` times, evenly
/// spaced over the horizon; retention restarts at `A` after each recall and the
/// decay clock restarts with it.
pub fn generate_curves(
    params: &SpacingParams,
    intervals: &[f64],
    horizon: f64,
    repetitions: usize,
) -> Result<Vec<CurveSeries>> {
    params.validate()?;
    if intervals.is_empty() {
        return Err(Error::Argument("no recall intervals given".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Argument(format!(
            "horizon must be nonnegative, got {horizon}"
        )));
    }
    if let Some(i) = intervals.iter().find(|i| !(**i >= 0.0)) {
        return Err(Error::Argument(format!(
            "recall interval must be nonnegative, got {i}"
        )));
    }
    let reps = repetitions.max(1);
    let steps = (horizon * SAMPLES_PER_UNIT as f64).ceil() as usize;
    let times: Vec<f64> = if steps == 0 {
        vec![0.0]
    } else {
        (0..=steps)
            .map(|k| horizon * k as f64 / steps as f64)
            .collect()
    };
    let segment = horizon / reps as f64;
    Ok(intervals
        .iter()
        .map(|&interval| {
            let retention = times
                .iter()
                .map(|&t| {
                    let since = if reps == 1 || segment == 0.0 {
                        t
                    } else {
                        let k = ((t / segment).floor() as usize).min(reps - 1);
                        t - k as f64 * segment
                    };
                    retention(since, params, interval)
                })
                .collect();
            CurveSeries {
                interval,
                times: times.clone(),
                retention,
            }
        })
        .collect())
}
