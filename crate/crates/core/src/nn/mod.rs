// SPDX-License-Identifier: Apache-2.0

//! Dense-network engine: forward pass, manual backpropagation, losses and SGD.

mod checkpoint;
mod loss;
mod matrix;
mod network;
mod optim;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use loss::{
    accumulate_ce_grad, accumulate_kl_student_grad, accumulate_kl_target_grad, cross_entropy,
    kl_divergence, mse, softmax, softmax_tempered, LogitBatch, PROB_FLOOR,
};
pub use matrix::Matrix;
pub use network::{Activation, Dense, Network};
pub use optim::{sgd_step, OptimizerState};
