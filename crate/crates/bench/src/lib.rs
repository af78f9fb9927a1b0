// SPDX-License-Identifier: Apache-2.0

//! Benchmark fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vbm_core::augment::{AugPolicy, Augmenter, Sample};
use vbm_core::nn::softmax;
use vbm_core::{Activation, Matrix, Network};

pub const INPUT_DIM: usize = 200;
pub const CLASSES: usize = 10;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A 200-128-10 ReLU network.
pub fn network() -> Network {
    Network::new(&[INPUT_DIM, 128, CLASSES], Activation::Relu, 0, &mut rng(0)).unwrap()
}

pub fn inputs(rows: usize) -> Matrix {
    let mut r = rng(1);
    let data = (0..rows * INPUT_DIM)
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    Matrix::from_vec(rows, INPUT_DIM, data).unwrap()
}

pub fn samples(n: usize) -> Vec<Sample> {
    let mut r = rng(2);
    (0..n)
        .map(|i| {
            let x = (0..INPUT_DIM).map(|_| r.random_range(-1.0..1.0)).collect();
            Sample::vector(x, i % CLASSES, 0, i as u64)
        })
        .collect()
}

pub fn augmenter() -> Augmenter {
    Augmenter::new(
        AugPolicy::default_weak(),
        AugPolicy::default_strong(),
        true,
        None,
    )
    .unwrap()
}

/// Probability vectors for `entries` entries of `views` views each, with labels.
pub fn view_predictions(entries: usize, views: usize) -> (Vec<Vec<Vec<f64>>>, Vec<usize>) {
    let mut r = rng(3);
    let preds = (0..entries)
        .map(|_| {
            (0..views)
                .map(|_| {
                    let z: Vec<f64> = (0..CLASSES).map(|_| r.random_range(-3.0..3.0)).collect();
                    softmax(&z, None).unwrap()
                })
                .collect()
        })
        .collect();
    let labels = (0..entries).map(|i| i % CLASSES).collect();
    (preds, labels)
}
