//! Held-out evaluation: row-normalised confusion matrix, accuracy, F1 and
//! ROC AUC. The positive class is `suspicious`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: u64,
    pub false_negative: u64,
    pub false_positive: u64,
    pub true_negative: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        self.true_positive += other.true_positive;
        self.false_negative += other.false_negative;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
    }

    /// Percentages by true class. Row 0 is suspicious, row 1 legitimate;
    /// column 0 is predicted suspicious, column 1 predicted legitimate.
    pub fn percentages(&self) -> [[f64; 2]; 2] {
        let row = |a: u64, b: u64| {
            let n = (a + b) as f64;
            if n == 0.0 {
                [0.0, 0.0]
            } else {
                [100.0 * a as f64 / n, 100.0 * b as f64 / n]
            }
        };
        [
            row(self.true_positive, self.false_negative),
            row(self.false_positive, self.true_negative),
        ]
    }

    pub fn total(&self) -> u64 {
        self.true_positive + self.false_negative + self.false_positive + self.true_negative
    }

    pub fn accuracy(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            0.0
        } else {
            (self.true_positive + self.true_negative) as f64 / n as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.true_positive + self.false_positive + self.false_negative;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.true_positive as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub counts: ConfusionCounts,
    pub confusion_pct: [[f64; 2]; 2],
    pub accuracy: f64,
    pub f1: f64,
    /// Absent when the test set holds a single class.
    pub auc: Option<f64>,
}

pub fn confusion(scores: &[f64], labels: &[Label]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (s, l) in scores.iter().zip(labels) {
        let predicted_positive = *s > 0.0;
        match (l, predicted_positive) {
            (Label::Suspicious, true) => c.true_positive += 1,
            (Label::Suspicious, false) => c.false_negative += 1,
            (Label::Legitimate, true) => c.false_positive += 1,
            (Label::Legitimate, false) => c.true_negative += 1,
        }
    }
    c
}

/// ROC curve as `(false positive rate, true positive rate)` points, one per
/// distinct score threshold, from `(0, 0)` to `(1, 1)`.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Vec<(f64, f64)> {
    let pos = labels.iter().filter(|l| **l == Label::Suspicious).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let threshold = scores[order[k]];
        while k < order.len() && scores[order[k]] == threshold {
            match labels[order[k]] {
                Label::Suspicious => tp += 1.0,
                Label::Legitimate => fp += 1.0,
            }
            k += 1;
        }
        points.push((
            if neg > 0.0 { fp / neg } else { 0.0 },
            if pos > 0.0 { tp / pos } else { 0.0 },
        ));
    }
    points
}

/// Trapezoidal area under [`roc_curve`]. Tied scores form a diagonal
/// segment, which counts them as half-correct.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let pos = labels.iter().filter(|l| **l == Label::Suspicious).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let roc = roc_curve(scores, labels);
    Ok(roc
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

pub fn evaluate(scores: &[f64], labels: &[Label]) -> Result<EvalMetrics> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    let counts = confusion(scores, labels);
    let auc = match auc(scores, labels) {
        Ok(a) => Some(a),
        Err(Error::SingleClass) => {
            log::warn!("test set holds a single class; AUC omitted");
            None
        }
        Err(e) => return Err(e),
    };
    Ok(EvalMetrics {
        confusion_pct: counts.percentages(),
        accuracy: counts.accuracy(),
        f1: counts.f1(),
        auc,
        counts,
    })
}
