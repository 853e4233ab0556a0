//! Precision-recall evaluation.
//!
//! AUPRC is the step-wise average precision. Scores are visited in
//! descending order with tied scores grouped, and each group contributes
//! `precision_after_group * positives_in_group / total_positives`. Grouping
//! makes the value independent of input order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Mode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<usize> {
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::UndefinedMetric(format!("non-finite score {s}")));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Config(format!("label {l} is not binary")));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("no positive labels".into()));
    }
    Ok(positives)
}

/// One point per distinct score, thresholds descending.
pub fn pr_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<PrPoint>> {
    let positives = validate(scores, labels)? as f64;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&threshold) == Ordering::Equal {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives,
        });
    }
    Ok(points)
}

/// Average precision over the PR steps.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for p in curve {
        ap += p.precision * (p.recall - prev_recall);
        prev_recall = p.recall;
    }
    Ok(ap.clamp(0.0, 1.0))
}

/// One model evaluation on one shifted split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub q: f64,
    pub alpha_test: f64,
    pub mode: Mode,
    pub representation: String,
    pub v: f64,
    pub seed: u64,
    pub auprc: f64,
}

/// Mean and sample standard deviation of AUPRC for one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub q: f64,
    pub alpha_test: f64,
    pub mode: Mode,
    pub representation: String,
    pub v: f64,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// True when `n == 1`; `std` is reported as 0.
    pub single_run: bool,
}

impl AggregateRow {
    /// Half-width of the normal-approximation 95% interval, `1.96·std/√n`.
    pub fn ci95_half_width(&self) -> f64 {
        1.96 * self.std / (self.n as f64).sqrt()
    }
}

fn group_order(a: &EvalRecord, b: &EvalRecord) -> Ordering {
    a.q.total_cmp(&b.q)
        .then(a.alpha_test.total_cmp(&b.alpha_test))
        .then(a.mode.cmp(&b.mode))
        .then(a.representation.cmp(&b.representation))
        .then(a.v.total_cmp(&b.v))
}

/// Groups by `(q, alpha_test, mode, representation, v)`, sorted by that key.
pub fn aggregate(records: &[EvalRecord]) -> Vec<AggregateRow> {
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| group_order(a, b));
    sorted
        .chunk_by(|a, b| group_order(a, b) == Ordering::Equal)
        .map(|group| {
            let n = group.len();
            let mean = group.iter().map(|r| r.auprc).sum::<f64>() / n as f64;
            let std = if n > 1 {
                let ss: f64 = group.iter().map(|r| (r.auprc - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let head = group[0];
            AggregateRow {
                q: head.q,
                alpha_test: head.alpha_test,
                mode: head.mode,
                representation: head.representation.clone(),
                v: head.v,
                n,
                mean,
                std,
                single_run: n == 1,
            }
        })
        .collect()
}
