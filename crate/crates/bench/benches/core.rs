// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vbm_bench::*;
use vbm_core::continual::{loss_ssl, loss_supervised};
use vbm_core::scheduler::{build_schedule, Step};
use vbm_core::{Matrix, RunStreams, SeedTree, TrainConfig};

fn forward_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward_backward");
    for rows in [60, 240] {
        let x = inputs(rows);
        let grad = Matrix::zeros(rows, CLASSES);
        let mut net = network();
        g.bench_with_input(BenchmarkId::from_parameter(rows), &rows, |b, _| {
            b.iter(|| {
                net.zero_grad();
                black_box(net.forward(&x).unwrap());
                net.backward(&grad).unwrap();
            })
        });
    }
    g.finish();
}

fn schedule_epoch(c: &mut Criterion) {
    let pool = samples(1000);
    let aug = augmenter();
    let empty: Vec<vbm_core::Sample> = Vec::new();
    let mut g = c.benchmark_group("schedule_epoch");
    for views in [1, 3, 5] {
        let cfg = TrainConfig::new(views, 60, views, 0.1);
        g.bench_with_input(BenchmarkId::from_parameter(views), &views, |b, _| {
            b.iter(|| {
                let mut s = build_schedule(pool.len(), &cfg).unwrap();
                let mut streams = RunStreams::new(SeedTree::new(0));
                let mut n = 0;
                loop {
                    match s
                        .next_view_batch(&pool, &empty, &aug, &mut streams)
                        .unwrap()
                    {
                        Step::Batch(batch) => n += batch.presentations(),
                        Step::EpochEnd(_) => {}
                        Step::Finished => break,
                    }
                }
                black_box(n)
            })
        });
    }
    g.finish();
}

fn losses(c: &mut Criterion) {
    let (preds, labels) = view_predictions(20, 3);
    c.bench_function("loss_supervised", |b| {
        b.iter(|| black_box(loss_supervised(&preds, &labels).unwrap()))
    });
    c.bench_function("loss_ssl", |b| {
        b.iter(|| black_box(loss_ssl(&preds).unwrap()))
    });
}

criterion_group!(benches, forward_backward, schedule_epoch, losses);
criterion_main!(benches);
