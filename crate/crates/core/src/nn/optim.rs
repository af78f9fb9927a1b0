// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

/// SGD with optional heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    #[serde(skip)]
    velocity: Vec<f64>,
}

impl OptimizerState {
    pub fn new(learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be nonnegative, got {weight_decay}"
            )));
        }
        Ok(Self {
            learning_rate,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    /// Plain SGD. Unlike [`OptimizerState::new`] this accepts `γ = 0`, which freezes the parameters.
    pub fn plain(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            momentum: 0.0,
            weight_decay: 0.0,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn reset(&mut self) {
        self.velocity.clear();
    }
}

/// `v ← μv + (g + λθ)`, `θ ← θ − γv`; with `μ = λ = 0` this is exactly `θ − γg`.
pub fn sgd_step(net: &mut Network, opt: &mut OptimizerState) {
    let n = net.param_count();
    if opt.velocity.len() != n {
        opt.velocity = vec![0.0; n];
    }
    let (lr, mu, wd) = (opt.learning_rate, opt.momentum, opt.weight_decay);
    let velocity = &mut opt.velocity;
    net.for_each_param_grad(|i, theta, g| {
        let g = if wd == 0.0 { g } else { g + wd * *theta };
        if mu == 0.0 {
            *theta -= lr * g;
        } else {
            let v = mu * velocity[i] + g;
            velocity[i] = v;
            *theta -= lr * v;
        }
    });
    net.invalidate_cache();
}
