// SPDX-License-Identifier: Apache-2.0

//! CSV tables from run records.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::runner::{aggregate, Aggregate, RunRecord};
use crate::error::{Error, Result};
use crate::metrics::MeanStd;
use crate::spacing::CurveSeries;

pub const SUMMARY_HEADER: [&str; 18] = [
    "config_hash",
    "name",
    "method",
    "vbm",
    "views",
    "variant",
    "seeds",
    "avg_mean",
    "avg_std",
    "last_mean",
    "last_std",
    "forgetting_mean",
    "forgetting_std",
    "dof_mean",
    "dof_std",
    "avg_cil_til_mean",
    "avg_cil_til_std",
    "pairing_key",
];

pub const TABLE_HEADER: [&str; 11] = [
    "method",
    "views",
    "variant",
    "seeds",
    "baseline_avg",
    "baseline_last",
    "vbm_avg",
    "vbm_last",
    "delta_avg",
    "delta_last",
    "vbm_config_hash",
];

pub const RETENTION_HEADER: [&str; 6] = [
    "config_hash",
    "seed",
    "task",
    "epoch",
    "accuracy",
    "trained_task",
];

pub const CURVE_HEADER: [&str; 3] = ["t", "R", "interval"];

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Data(format!("csv: {other:?}")),
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn opt_pair(s: &Option<MeanStd>) -> [String; 2] {
    match s {
        Some(m) => [fmt(m.mean), fmt(m.std)],
        None => [String::new(), String::new()],
    }
}

/// One row per configuration: mean and standard deviation across seeds.
pub fn summary_csv(aggs: &[Aggregate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for a in aggs {
        let mut row = vec![
            a.config_hash.clone(),
            a.name.clone().unwrap_or_default(),
            a.method.to_string(),
            a.vbm.to_string(),
            a.views.to_string(),
            format!("{:?}", a.variant).to_lowercase(),
            a.seeds.len().to_string(),
            fmt(a.avg.mean),
            fmt(a.avg.std),
            fmt(a.last.mean),
            fmt(a.last.std),
        ];
        row.extend(opt_pair(&a.forgetting));
        row.extend(opt_pair(&a.degree_of_forgetting));
        row.extend(opt_pair(&a.avg_cil_til));
        row.push(a.pairing_key.clone());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// A view-batch configuration next to its baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub baseline: Aggregate,
    pub vbm: Aggregate,
}

impl PairedRow {
    pub fn delta_avg(&self) -> f64 {
        self.vbm.avg.mean - self.baseline.avg.mean
    }

    pub fn delta_last(&self) -> f64 {
        self.vbm.last.mean - self.baseline.last.mean
    }
}

/// Pairs every view-batch aggregate with the baseline aggregate sharing its
/// pairing key. A view-batch configuration without exactly one baseline is an error.
pub fn pair(aggs: &[Aggregate]) -> Result<Vec<PairedRow>> {
    let mut baselines: BTreeMap<&str, Vec<&Aggregate>> = BTreeMap::new();
    for a in aggs.iter().filter(|a| !a.vbm) {
        baselines.entry(a.pairing_key.as_str()).or_default().push(a);
    }
    let mut rows = Vec::new();
    for v in aggs.iter().filter(|a| a.vbm) {
        match baselines.get(v.pairing_key.as_str()).map(Vec::as_slice) {
            Some([b]) => rows.push(PairedRow {
                baseline: (*b).clone(),
                vbm: v.clone(),
            }),
            Some(many) => {
                return Err(Error::Pairing(format!(
                    "{} baselines match view-batch config {}",
                    many.len(),
                    &v.config_hash[..12]
                )))
            }
            None => {
                return Err(Error::Pairing(format!(
                    "no baseline run for view-batch config {} ({} {})",
                    &v.config_hash[..12],
                    v.method,
                    v.name.as_deref().unwrap_or("unnamed")
                )))
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.vbm.method, a.vbm.views, &a.vbm.config_hash).cmp(&(
            b.vbm.method,
            b.vbm.views,
            &b.vbm.config_hash,
        ))
    });
    Ok(rows)
}

/// Per-method table: baseline and view-batch Avg/Last with their differences.
pub fn table_csv(rows: &[PairedRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.vbm.method.to_string(),
            r.vbm.views.to_string(),
            format!("{:?}", r.vbm.variant).to_lowercase(),
            r.vbm.seeds.len().min(r.baseline.seeds.len()).to_string(),
            fmt(r.baseline.avg.mean),
            fmt(r.baseline.last.mean),
            fmt(r.vbm.avg.mean),
            fmt(r.vbm.last.mean),
            fmt(r.delta_avg()),
            fmt(r.delta_last()),
            r.vbm.config_hash.clone(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Accuracy on every task after every epoch, for retention-decay curves.
pub fn retention_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RETENTION_HEADER).map_err(csv_err)?;
    for r in records {
        for series in &r.decay {
            for &(trained, epoch, acc) in &series.points {
                w.write_record([
                    r.config_hash.clone(),
                    r.seed.to_string(),
                    series.task.to_string(),
                    epoch.to_string(),
                    fmt(acc),
                    trained.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    finish(w)
}

/// Long-format forgetting curves: one row per (time, interval).
pub fn curves_csv(curves: &[CurveSeries]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).map_err(csv_err)?;
    for c in curves {
        for (t, r) in c.times.iter().zip(&c.retention) {
            w.write_record([fmt(*t), fmt(*r), fmt(c.interval)])
                .map_err(csv_err)?;
        }
    }
    finish(w)
}

/// The rendered report tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: String,
    pub table: String,
    pub retention: String,
}

pub fn report(records: &[RunRecord]) -> Result<Report> {
    let aggs = aggregate(records);
    Ok(Report {
        summary: summary_csv(&aggs)?,
        table: table_csv(&pair(&aggs)?)?,
        retention: retention_csv(records)?,
    })
}

/// Writes `summary.csv`, `table.csv` and `retention.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, body) in [
        ("summary.csv", &report.summary),
        ("table.csv", &report.table),
        ("retention.csv", &report.retention),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
