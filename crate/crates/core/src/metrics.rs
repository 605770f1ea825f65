//! Confusion matrices and the classification scores derived from them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::taxonomy::LanguageGroup;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("{labels} labels but {predictions} predictions")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("class index {value} out of range for {classes} classes")]
    ClassOutOfRange { value: usize, classes: usize },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("{0} class names for {1} classes")]
    ClassNames(usize, usize),
}

/// Rows are true classes, columns predicted classes, both in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<LanguageGroup>,
    pub counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// An off-diagonal cell, as a fraction of the true class's utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionPair {
    pub true_class: usize,
    pub predicted_class: usize,
    pub count: u64,
    pub row_rate: f64,
}

pub fn confusion(labels: &[usize], predictions: &[usize], classes: usize) -> Result<ConfusionMatrix, MetricsError> {
    if labels.len() != predictions.len() {
        return Err(MetricsError::LengthMismatch {
            labels: labels.len(),
            predictions: predictions.len(),
        });
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&l, &p) in labels.iter().zip(predictions) {
        for value in [l, p] {
            if value >= classes {
                return Err(MetricsError::ClassOutOfRange { value, classes });
            }
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix { group: None, counts })
}

impl ConfusionMatrix {
    pub fn with_group(mut self, group: LanguageGroup) -> Self {
        self.group = Some(group);
        self
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_total(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    fn nonempty(&self) -> Result<u64, MetricsError> {
        match self.total() {
            0 => Err(MetricsError::Empty),
            n => Ok(n),
        }
    }

    pub fn accuracy(&self) -> Result<f64, MetricsError> {
        let total = self.nonempty()?;
        Ok(self.trace() as f64 / total as f64)
    }

    /// Precision, recall and F1 per class; a zero denominator scores 0.
    pub fn per_class(&self, names: &[String]) -> Result<Vec<ClassMetrics>, MetricsError> {
        if names.len() != self.classes() {
            return Err(MetricsError::ClassNames(names.len(), self.classes()));
        }
        self.nonempty()?;
        Ok(names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let tp = self.counts[i][i] as f64;
                let ratio = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
                let precision = ratio(self.column_total(i));
                let recall = ratio(self.row_total(i));
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    name: name.clone(),
                    precision,
                    recall,
                    f1,
                    support: self.row_total(i),
                }
            })
            .collect())
    }

    /// Unweighted mean of per-class F1 over all classes, including those
    /// absent from the labels (they score 0; see [`Self::zero_support_classes`]).
    pub fn macro_f1(&self) -> Result<f64, MetricsError> {
        let names: Vec<String> = (0..self.classes()).map(|_| String::new()).collect();
        let per_class = self.per_class(&names)?;
        Ok(per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64)
    }

    pub fn zero_support_classes(&self) -> Vec<usize> {
        (0..self.classes()).filter(|&i| self.row_total(i) == 0).collect()
    }
}

/// Off-diagonal cells ranked by row-normalised rate; ties keep canonical
/// (row, column) order. Empty rows and zero cells never appear.
pub fn top_confusion_pairs(cm: &ConfusionMatrix, n: usize) -> Vec<ConfusionPair> {
    let k = cm.classes();
    let mut cells: Vec<(usize, usize, u64, u64)> = Vec::new();
    for i in 0..k {
        let row = cm.row_total(i);
        for j in 0..k {
            if i != j && cm.counts[i][j] > 0 {
                cells.push((i, j, cm.counts[i][j], row));
            }
        }
    }
    // Compare c1/r1 with c2/r2 exactly by cross-multiplying.
    cells.sort_by(|a, b| {
        let lhs = a.2 as u128 * b.3 as u128;
        let rhs = b.2 as u128 * a.3 as u128;
        match rhs.cmp(&lhs) {
            Ordering::Equal => (a.0, a.1).cmp(&(b.0, b.1)),
            other => other,
        }
    });
    cells
        .into_iter()
        .take(n)
        .map(|(i, j, c, row)| ConfusionPair {
            true_class: i,
            predicted_class: j,
            count: c,
            row_rate: c as f64 / row as f64,
        })
        .collect()
}

/// Scores for one evaluation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group: LanguageGroup,
    pub class_names: Vec<String>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub top_confusion_pairs: Vec<ConfusionPair>,
    pub n_utterances: usize,
    /// Classes with no test utterances; they count as F1 = 0.
    #[serde(default)]
    pub zero_support: Vec<String>,
    /// Whether evaluation audio was augmented. Always false for standard evaluation.
    #[serde(default)]
    pub augmented: bool,
    /// Hash of the resolved run configuration, when known.
    #[serde(default)]
    pub config_fingerprint: Option<String>,
}

pub const DEFAULT_TOP_PAIRS: usize = 5;

impl EvalReport {
    pub fn from_labels(
        group: LanguageGroup,
        class_names: &[String],
        labels: &[usize],
        predictions: &[usize],
    ) -> Result<Self, MetricsError> {
        let cm = confusion(labels, predictions, class_names.len())?.with_group(group);
        let per_class = cm.per_class(class_names)?;
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
        Ok(EvalReport {
            group,
            class_names: class_names.to_vec(),
            accuracy: cm.accuracy()?,
            macro_f1,
            zero_support: cm.zero_support_classes().into_iter().map(|i| class_names[i].clone()).collect(),
            per_class,
            top_confusion_pairs: top_confusion_pairs(&cm, DEFAULT_TOP_PAIRS),
            n_utterances: labels.len(),
            confusion: cm,
            augmented: false,
            config_fingerprint: None,
        })
    }
}
