// SPDX-License-Identifier: Apache-2.0

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vbm_core::io::{
    aggregate, encode_idx, generate_dataset, pair, parse_idx, read_idx, report, run, write_report,
    IdxArray,
};
use vbm_core::{DatasetSpec, Error, ExperimentConfig, MeanStd, StreamSpec};

fn write_idx(path: &Path, dims: Vec<usize>, data: Vec<u8>) {
    let bytes = encode_idx(&IdxArray { dims, data }).unwrap();
    std::fs::write(path, bytes).unwrap();
}

/// Four classes of 3x3 images; each class lights up a different pixel.
fn write_image_set(dir: &Path, prefix: &str, per_class: usize) {
    let classes = 4;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..classes * per_class {
        let c = i % classes;
        let mut img = vec![10u8; 9];
        img[c * 2] = 250;
        images.extend(img);
        labels.push(c as u8);
    }
    write_idx(
        &dir.join(format!("{prefix}-images.idx")),
        vec![classes * per_class, 3, 3],
        images,
    );
    write_idx(
        &dir.join(format!("{prefix}-labels.idx")),
        vec![classes * per_class],
        labels,
    );
}

fn idx_spec(dir: &Path) -> DatasetSpec {
    serde_json::from_value(serde_json::json!({
        "generator": "idx-images",
        "train_images": dir.join("train-images.idx"),
        "train_labels": dir.join("train-labels.idx"),
        "test_images": dir.join("test-images.idx"),
        "test_labels": dir.join("test-labels.idx"),
    }))
    .unwrap()
}

fn two_task_stream() -> StreamSpec {
    serde_json::from_str(r#"{"protocol": "cil", "tasks": 2, "classes_per_task": 2}"#).unwrap()
}

#[test]
fn idx_files_round_trip() {
    let a = IdxArray {
        dims: vec![2, 2, 3],
        data: (0..12).collect(),
    };
    let bytes = encode_idx(&a).unwrap();
    assert_eq!(parse_idx(&bytes).unwrap(), a);
    assert!(matches!(
        parse_idx(&bytes[..bytes.len() - 1]),
        Err(Error::Parse { .. })
    ));
}

#[test]
fn idx_images_feed_the_dataset_generator() {
    let dir = tempfile::tempdir().unwrap();
    write_image_set(dir.path(), "train", 5);
    write_image_set(dir.path(), "test", 2);
    assert_eq!(
        read_idx(&dir.path().join("train-images.idx"))
            .unwrap()
            .items(),
        20
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stream = generate_dataset(&idx_spec(dir.path()), &two_task_stream(), &mut rng).unwrap();
    assert_eq!(stream.tasks.len(), 2);
    assert_eq!(stream.input_dim, 9);
    assert_eq!(stream.num_classes, 4);
    for t in &stream.tasks {
        assert_eq!(t.train.len(), 10);
        assert_eq!(t.test.len(), 4);
        assert!(t
            .train
            .iter()
            .flat_map(|s| &s.features)
            .all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn missing_idx_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = generate_dataset(&idx_spec(dir.path()), &two_task_stream(), &mut rng).unwrap_err();
    assert!(!err.is_config());
}

#[test]
fn malformed_configs_are_config_errors() {
    for text in [
        "{",
        r#"{"dataset": 3}"#,
        r#"{"name": "x", "unknown_field": 1}"#,
    ] {
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.is_config(), "{text}: {err}");
    }
}

fn tiny(method: &str, vbm: bool) -> ExperimentConfig {
    let capacity = if method == "er" { 20 } else { 0 };
    ExperimentConfig::from_json(&format!(
        r#"{{
            "name": "tiny-{method}-{vbm}",
            "dataset": {{"generator": "split-gaussians", "classes": 4, "dim": 5,
                         "train_per_class": 12, "test_per_class": 6, "separation": 3.0}},
            "stream": {{"protocol": "cil", "tasks": 2, "classes_per_task": 2}},
            "method": {{"name": "{method}", "vbm": {vbm}}},
            "train": {{"base_epochs": 2, "batch_size": 8, "views": 2, "learning_rate": 0.02}},
            "network": {{"hidden": [8]}},
            "buffer": {{"capacity": {capacity}}},
            "seeds": [0, 1, 2]
        }}"#
    ))
    .unwrap()
}

#[test]
fn invalid_values_fail_validation() {
    let mut cfg = tiny("er", true);
    cfg.train.views = 3;
    assert!(cfg.validate().unwrap_err().is_config());
    let mut cfg = tiny("finetune", false);
    cfg.buffer.capacity = 5;
    assert!(cfg.validate().unwrap_err().is_config());
}

#[test]
fn aggregates_recompute_from_records() {
    let records = run(&tiny("er", true)).unwrap();
    assert_eq!(records.len(), 3);
    let aggs = aggregate(&records);
    assert_eq!(aggs.len(), 1);
    let avg = MeanStd::of(&records.iter().map(|r| r.metrics.avg).collect::<Vec<_>>());
    assert_eq!(aggs[0].avg, avg);
    assert_eq!(aggs[0].seeds, vec![0, 1, 2]);
    assert_eq!(aggs[0].views, 2);
}

#[test]
fn reports_pair_view_batch_runs_with_their_baseline() {
    let mut records = run(&tiny("er", true)).unwrap();
    // Without a baseline the pairing step refuses to build the table.
    assert!(matches!(pair(&aggregate(&records)), Err(Error::Pairing(_))));
    assert!(report(&records).is_err());
    records.extend(run(&tiny("er", false)).unwrap());
    let rows = pair(&aggregate(&records)).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!((r.delta_avg() - (r.vbm.avg.mean - r.baseline.avg.mean)).abs() < 1e-15);
    let rep = report(&records).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(dir.path(), &rep).unwrap();
    assert!(written.iter().all(|p| p.exists()));
    assert!(written
        .iter()
        .any(|p| p.extension().is_some_and(|e| e == "csv")));
}
