// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration, datasets, runs, sweeps and reports.

pub mod config;
pub mod data;
pub mod idx;
pub mod report;
pub mod runner;

pub use config::*;
pub use data::*;
pub use idx::*;
pub use report::*;
pub use runner::*;
