//! Macro-F1, unweighted average recall, and their mean.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::EmotionSpace;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{golds} gold labels but {preds} predictions")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("no samples to score")]
    EmptyMatrix,
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    space: EmotionSpace,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(space: EmotionSpace) -> Self {
        let c = space.len();
        Self {
            space,
            counts: vec![0; c * c],
        }
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        let c = self.space.len();
        self.counts[gold * c + pred] += 1;
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.space.len() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.space.len()).map(<[u64]>::to_vec).collect()
    }
}

/// Tallies `(gold, pred)` label pairs.
pub fn confusion<S: AsRef<str>>(
    golds: &[S],
    preds: &[S],
    space: &EmotionSpace,
) -> Result<ConfusionMatrix, MetricsError> {
    if golds.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            golds: golds.len(),
            preds: preds.len(),
        });
    }
    if golds.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let idx = |s: &S| {
        space
            .index_of(s.as_ref())
            .ok_or_else(|| MetricsError::UnknownLabel(s.as_ref().to_string()))
    };
    let mut cm = ConfusionMatrix::new(space.clone());
    for (g, p) in golds.iter().zip(preds) {
        cm.add(idx(g)?, idx(p)?);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub support: u64,
    /// Percent.
    pub precision: f64,
    /// Percent.
    pub recall: f64,
    /// Percent.
    pub f1: f64,
}

/// All scores are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassScores>,
    pub macro_f1: f64,
    pub uar: f64,
    pub average: f64,
    pub confusion: Vec<Vec<u64>>,
    pub samples: u64,
}

/// The combined score: arithmetic mean of macro-F1 and UAR.
pub fn combined_average(macro_f1: f64, uar: f64) -> f64 {
    (macro_f1 + uar) / 2.0
}

/// Scores every class in the space, including ones with no support.
pub fn evaluate(cm: &ConfusionMatrix) -> Result<EvalReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let c = cm.space.len();
    let mut per_class = Vec::with_capacity(c);
    for k in 0..c {
        let tp = cm.get(k, k) as f64;
        let support: u64 = (0..c).map(|p| cm.get(k, p)).sum();
        let predicted: u64 = (0..c).map(|g| cm.get(g, k)).sum();
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassScores {
            label: cm.space.label(k).to_string(),
            support,
            precision: precision * 100.0,
            recall: recall * 100.0,
            f1: f1 * 100.0,
        });
    }
    let n = c as f64;
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / n;
    let uar = per_class.iter().map(|s| s.recall).sum::<f64>() / n;
    Ok(EvalReport {
        per_class,
        macro_f1,
        uar,
        average: combined_average(macro_f1, uar),
        confusion: cm.rows(),
        samples: total,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .per_class
            .iter()
            .map(|s| s.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        writeln!(
            f,
            "{:<width$}  {:>7}  {:>9}  {:>7}  {:>7}",
            "class", "support", "precision", "recall", "f1"
        )?;
        for s in &self.per_class {
            writeln!(
                f,
                "{:<width$}  {:>7}  {:>9.2}  {:>7.2}  {:>7.2}",
                s.label, s.support, s.precision, s.recall, s.f1
            )?;
        }
        writeln!(f)?;
        writeln!(f, "samples   {}", self.samples)?;
        writeln!(f, "macro-F1  {:.2}", self.macro_f1)?;
        writeln!(f, "UAR       {:.2}", self.uar)?;
        writeln!(f, "Average   {:.2}", self.average)
    }
}
