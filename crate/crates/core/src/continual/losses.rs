// SPDX-License-Identifier: Apache-2.0

//! Training objectives over a stacked logits matrix.
//!
//! Each term returns its value and, when given a gradient buffer, adds
//! `weight · ∂term/∂logits` into it. Composite losses are sums of terms, so
//! their gradient is the sum of the term gradients.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::nn::{
    accumulate_ce_grad, accumulate_kl_student_grad, accumulate_kl_target_grad, kl_divergence,
    softmax, softmax_tempered, LogitBatch, Matrix, Network, PROB_FLOOR,
};

/// The rows of one view-batch entry; the first row is the weak view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub rows: Range<usize>,
    pub label: usize,
}

fn check_rows(logits: &Matrix, rows: &Range<usize>) -> Result<()> {
    if rows.end > logits.rows() || rows.is_empty() {
        return Err(Error::Dimension(format!(
            "group rows {rows:?} do not fit {} logit rows",
            logits.rows()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over every row of every group.
pub fn supervised_term(
    logits: &Matrix,
    groups: &[Group],
    weight: f64,
    mut grad: Option<&mut Matrix>,
) -> Result<f64> {
    let n: usize = groups.iter().map(|g| g.rows.len()).sum();
    if n == 0 {
        return Err(Error::Argument(
            "supervised loss over an empty batch".into(),
        ));
    }
    let scale = weight / n as f64;
    let mut total = 0.0;
    for g in groups {
        check_rows(logits, &g.rows)?;
        if g.label >= logits.cols() {
            return Err(Error::Argument(format!("label {} out of range", g.label)));
        }
        for r in g.rows.clone() {
            let p = softmax(logits.row(r), None)?;
            total -= p[g.label].max(PROB_FLOOR).ln();
            if let Some(gm) = grad.as_deref_mut() {
                accumulate_ce_grad(&p, g.label, scale, gm.row_mut(r));
            }
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslLoss {
    pub value: f64,
    /// False when no group has a second view, in which case the value is 0.
    pub active: bool,
}

/// One-to-many consistency: mean over groups and strong views `j ≥ 2` of
/// `KL(p¹ ‖ pʲ)`, with `p¹` the weak view's softmax.
///
/// The weak-view distribution is a fixed target unless `through_target` is set.
pub fn ssl_term(
    logits: &Matrix,
    groups: &[Group],
    weight: f64,
    through_target: bool,
    mut grad: Option<&mut Matrix>,
) -> Result<SslLoss> {
    let pairs: usize = groups.iter().map(|g| g.rows.len().saturating_sub(1)).sum();
    if pairs == 0 {
        return Ok(SslLoss {
            value: 0.0,
            active: false,
        });
    }
    let scale = weight / pairs as f64;
    let mut total = 0.0;
    for g in groups {
        check_rows(logits, &g.rows)?;
        let weak = g.rows.start;
        let p1 = softmax(logits.row(weak), None)?;
        for r in g.rows.clone().skip(1) {
            let pj = softmax(logits.row(r), None)?;
            total += kl_divergence(&p1, &pj)?;
            if let Some(gm) = grad.as_deref_mut() {
                accumulate_kl_student_grad(&p1, &pj, scale, gm.row_mut(r));
                if through_target {
                    accumulate_kl_target_grad(&p1, &pj, scale, gm.row_mut(weak));
                }
            }
        }
    }
    Ok(SslLoss {
        value: total / pairs as f64,
        active: true,
    })
}

/// Mean over `rows` of `‖z − stored‖²`.
pub fn logit_mse_term(
    logits: &Matrix,
    rows: &[usize],
    stored: &[&[f64]],
    weight: f64,
    mut grad: Option<&mut Matrix>,
) -> Result<f64> {
    if rows.len() != stored.len() {
        return Err(Error::Dimension(format!(
            "{} rows but {} stored logit vectors",
            rows.len(),
            stored.len()
        )));
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let n = rows.len() as f64;
    let mut total = 0.0;
    for (&r, s) in rows.iter().zip(stored) {
        if s.len() != logits.cols() {
            return Err(Error::Dimension(
                "stored logits have the wrong width".into(),
            ));
        }
        let z = logits.row(r);
        total += z
            .iter()
            .zip(*s)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        if let Some(gm) = grad.as_deref_mut() {
            let diff: Vec<f64> = z.iter().zip(*s).map(|(a, b)| a - b).collect();
            for (o, d) in gm.row_mut(r).iter_mut().zip(diff) {
                *o += weight * 2.0 * d / n;
            }
        }
    }
    Ok(total / n)
}

/// Knowledge distillation restricted to `classes`:
/// mean over rows of `τ² · KL(softmax(teacher/τ) ‖ softmax(student/τ))`.
/// `teacher` row `k` corresponds to logits row `rows[k]`.
pub fn distillation_term(
    logits: &Matrix,
    rows: &[usize],
    teacher: &Matrix,
    classes: &[usize],
    temperature: f64,
    weight: f64,
    mut grad: Option<&mut Matrix>,
) -> Result<f64> {
    if teacher.rows() != rows.len() || teacher.cols() != logits.cols() {
        return Err(Error::Dimension(
            "teacher logits do not match the student rows".into(),
        ));
    }
    if !(temperature >= 1.0) {
        return Err(Error::Config(format!(
            "distillation temperature must be at least 1, got {temperature}"
        )));
    }
    if rows.is_empty() || classes.is_empty() {
        return Ok(0.0);
    }
    let n = rows.len() as f64;
    let t2 = temperature * temperature;
    let mut total = 0.0;
    for (k, &r) in rows.iter().enumerate() {
        let zs: Vec<f64> = classes.iter().map(|&c| logits[(r, c)]).collect();
        let zt: Vec<f64> = classes.iter().map(|&c| teacher[(k, c)]).collect();
        let ps = softmax_tempered(&zs, temperature)?;
        let pt = softmax_tempered(&zt, temperature)?;
        total += t2 * kl_divergence(&pt, &ps)?;
        if let Some(gm) = grad.as_deref_mut() {
            let mut local = vec![0.0; classes.len()];
            accumulate_kl_student_grad(&pt, &ps, weight * t2 / (temperature * n), &mut local);
            let row = gm.row_mut(r);
            for (&c, g) in classes.iter().zip(local) {
                row[c] += g;
            }
        }
    }
    Ok(total / n)
}

// Value-only forms over probabilities and logit batches.

/// Mean cross-entropy over all views; `predictions[i][j]` is entry `i`'s view `j`.
pub fn loss_supervised(predictions: &[Vec<Vec<f64>>], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Dimension("one label per entry required".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (views, &y) in predictions.iter().zip(labels) {
        for p in views {
            let py = p
                .get(y)
                .ok_or_else(|| Error::Argument(format!("label {y} out of range")))?;
            total -= py.max(PROB_FLOOR).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Argument(
            "supervised loss over an empty batch".into(),
        ));
    }
    Ok(total / n as f64)
}

/// Mean `KL(p¹ ‖ pʲ)` over entries and their strong views.
pub fn loss_ssl(predictions: &[Vec<Vec<f64>>]) -> Result<SslLoss> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for views in predictions {
        let Some((weak, strong)) = views.split_first() else {
            continue;
        };
        for p in strong {
            total += kl_divergence(weak, p)?;
            pairs += 1;
        }
    }
    Ok(if pairs == 0 {
        SslLoss {
            value: 0.0,
            active: false,
        }
    } else {
        SslLoss {
            value: total / pairs as f64,
            active: true,
        }
    })
}

/// `CE(current) + α·MSE(buffer logits, stored) + β·CE(buffer)`.
pub fn loss_derpp(
    current: &LogitBatch,
    buffer: &LogitBatch,
    stored: &Matrix,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let ce = current.cross_entropy()?;
    if buffer.logits.rows() == 0 {
        return Ok(ce);
    }
    let mse = crate::nn::mse(&buffer.logits, stored)?;
    Ok(ce + alpha * mse + beta * buffer.cross_entropy()?)
}

/// `CE(current) + τ²·KL(softmax(teacher/τ) ‖ softmax(student/τ))` over `old_classes`.
pub fn loss_lwf(
    current: &LogitBatch,
    inputs: &Matrix,
    teacher: &Network,
    old_classes: &[usize],
    temperature: f64,
) -> Result<f64> {
    let ce = current.cross_entropy()?;
    let t = teacher.predict(inputs)?;
    let rows: Vec<usize> = (0..current.logits.rows()).collect();
    let kd = distillation_term(
        &current.logits,
        &rows,
        &t,
        old_classes,
        temperature,
        1.0,
        None,
    )?;
    Ok(ce + kd)
}
