// SPDX-License-Identifier: Apache-2.0

//! Softmax, cross-entropy, KL divergence and MSE, plus their gradients with
//! respect to logits.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Probabilities are floored to this value inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[inline]
fn ln_floor(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Logits with their labels and an optional per-row class mask (`true` = class kept).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    pub logits: Matrix,
    pub labels: Vec<usize>,
    pub class_mask: Option<Vec<Vec<bool>>>,
}

impl LogitBatch {
    pub fn new(logits: Matrix, labels: Vec<usize>) -> Result<Self> {
        Self::with_mask(logits, labels, None)
    }

    pub fn with_mask(
        logits: Matrix,
        labels: Vec<usize>,
        class_mask: Option<Vec<Vec<bool>>>,
    ) -> Result<Self> {
        if labels.len() != logits.rows() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                logits.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
            return Err(Error::Argument(format!(
                "label {bad} out of range for {} classes",
                logits.cols()
            )));
        }
        if let Some(mask) = &class_mask {
            if mask.len() != logits.rows() || mask.iter().any(|m| m.len() != logits.cols()) {
                return Err(Error::Dimension(
                    "class mask shape differs from logits".into(),
                ));
            }
        }
        Ok(Self {
            logits,
            labels,
            class_mask,
        })
    }

    pub fn probabilities(&self) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.logits.rows(), self.logits.cols());
        for r in 0..self.logits.rows() {
            let mask = self.class_mask.as_ref().map(|m| m[r].as_slice());
            let p = softmax(self.logits.row(r), mask)?;
            out.row_mut(r).copy_from_slice(&p);
        }
        Ok(out)
    }

    pub fn cross_entropy(&self) -> Result<f64> {
        cross_entropy(&self.probabilities()?, &self.labels)
    }
}

/// Max-subtracted softmax; masked entries get probability zero.
pub fn softmax(logits: &[f64], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        if m.len() != logits.len() {
            return Err(Error::Dimension(format!(
                "mask of length {} for {} logits",
                m.len(),
                logits.len()
            )));
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep(i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidMask("every class is masked".into()));
    }
    let mut out: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if keep(i) { (v - max).exp() } else { 0.0 })
        .collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Softmax of `logits / temperature`.
pub fn softmax_tempered(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    softmax(&scaled, None)
}

/// Mean over rows of `-ln p[label]`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Argument("cross-entropy of an empty batch".into()));
    }
    let mut total = 0.0;
    for (row, &y) in probs.iter_rows().zip(labels) {
        let p = row
            .get(y)
            .ok_or_else(|| Error::Argument(format!("label {y} out of range")))?;
        total -= ln_floor(*p);
    }
    Ok(total / labels.len() as f64)
}

/// `Σ p ln(p / q)` with both arguments floored inside the logarithm.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "KL between distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (ln_floor(pi) - ln_floor(qi)))
        .sum())
}

/// Mean over rows of the squared Euclidean distance.
pub fn mse(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "MSE between {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if a.rows() == 0 {
        return Err(Error::Argument("MSE of an empty batch".into()));
    }
    let s: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.rows() as f64)
}

// Gradients w.r.t. logits, accumulated as `out += scale * grad`.

/// Cross-entropy of a softmax row: `p - onehot(label)`.
pub fn accumulate_ce_grad(probs: &[f64], label: usize, scale: f64, out: &mut [f64]) {
    for (i, (o, &p)) in out.iter_mut().zip(probs).enumerate() {
        let t = if i == label { 1.0 } else { 0.0 };
        *o += scale * (p - t);
    }
}

/// `KL(target || softmax(z))` w.r.t. `z`, the target held fixed: `q - p`.
pub fn accumulate_kl_student_grad(target: &[f64], student: &[f64], scale: f64, out: &mut [f64]) {
    let mass: f64 = target.iter().sum();
    for ((o, &p), &q) in out.iter_mut().zip(target).zip(student) {
        *o += scale * (q * mass - p);
    }
}

/// `KL(softmax(z) || q)` w.r.t. `z`: `p ⊙ (v - Σ p v)` with `v = ln p - ln q`.
pub fn accumulate_kl_target_grad(target: &[f64], student: &[f64], scale: f64, out: &mut [f64]) {
    let v: Vec<f64> = target
        .iter()
        .zip(student)
        .map(|(&p, &q)| ln_floor(p) - ln_floor(q))
        .collect();
    let mean: f64 = target.iter().zip(&v).map(|(p, vi)| p * vi).sum();
    for ((o, &p), vi) in out.iter_mut().zip(target).zip(&v) {
        *o += scale * p * (vi - mean);
    }
}
