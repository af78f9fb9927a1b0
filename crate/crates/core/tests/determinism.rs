// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use vbm_core::io::{load_records, write_records};
use vbm_core::run_seed;

#[test]
fn every_method_is_bitwise_reproducible() {
    check_determinism().assert();
}

#[test]
fn different_seeds_give_different_runs() {
    let cfg = small_config("er", true);
    let a = run_seed(&cfg, 3).unwrap();
    let b = run_seed(&cfg, 4).unwrap();
    assert_ne!(a.accuracy, b.accuracy);
    assert_eq!(a.config_hash, b.config_hash);
}

#[test]
fn records_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("derpp", true);
    let records: Vec<_> = [3, 4].iter().map(|&s| run_seed(&cfg, s).unwrap()).collect();
    let paths = write_records(dir.path(), &records).unwrap();
    assert_eq!(paths.len(), 3);
    let back = load_records(dir.path()).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in records.iter().zip(&back) {
        assert_eq!(
            a.deterministic_json().unwrap(),
            b.deterministic_json().unwrap()
        );
    }
}
