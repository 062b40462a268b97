//! Scores for predicted labels: micro-F1, the task-weighted micro-F1 used
//! for the multitask subtask, confusion matrices, per-class recall and
//! error reports.

mod confusion;
mod report;

use std::collections::BTreeMap;

pub use confusion::{ClassRecall, ConfusionMatrix};
pub use report::{
    error_report, evaluate, ErrorExample, ErrorReport, MetricsReport, TaskErrors, WeightedScore,
    DEFAULT_RECALL_THRESHOLD, EQUAL_WEIGHTS_NOTE,
};

use crate::data::{label_distribution, DatasetSplit, LabelSchema, TaskId};
use crate::error::{Error, Result};

fn label_indices<P: AsRef<str>, G: AsRef<str>>(
    pred: &[P],
    gold: &[G],
    schema: &LabelSchema,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if pred.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::Validation("nothing to score: no predictions".into()));
    }
    let p = pred
        .iter()
        .enumerate()
        .map(|(i, l)| schema.require_index(l.as_ref(), &format!("prediction {i}")))
        .collect::<Result<_>>()?;
    let g = gold
        .iter()
        .enumerate()
        .map(|(i, l)| schema.require_index(l.as_ref(), &format!("gold label {i}")))
        .collect::<Result<_>>()?;
    Ok((p, g))
}

/// Pooled true positives, false positives and false negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PooledCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl PooledCounts {
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

pub fn pooled_counts<P: AsRef<str>, G: AsRef<str>>(
    pred: &[P],
    gold: &[G],
    schema: &LabelSchema,
) -> Result<PooledCounts> {
    let (p, g) = label_indices(pred, gold, schema)?;
    let mut c = PooledCounts::default();
    for class in 0..schema.len() {
        for (&pi, &gi) in p.iter().zip(&g) {
            match (pi == class, gi == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    Ok(c)
}

/// Micro-averaged F1 over all classes of `schema`.
pub fn micro_f1<P: AsRef<str>, G: AsRef<str>>(pred: &[P], gold: &[G], schema: &LabelSchema) -> Result<f64> {
    Ok(pooled_counts(pred, gold, schema)?.f1())
}

/// Equal weight for each task.
pub fn equal_task_weights(tasks: &[TaskId]) -> BTreeMap<TaskId, f64> {
    tasks.iter().map(|&t| (t, 1.0 / tasks.len() as f64)).collect()
}

/// `Σ wₜ·F1ₜ`. Weights must cover exactly the scored tasks and sum to 1.
pub fn weighted_micro_f1(per_task: &BTreeMap<TaskId, f64>, weights: &BTreeMap<TaskId, f64>) -> Result<f64> {
    if per_task.keys().ne(weights.keys()) {
        let names = |m: &BTreeMap<TaskId, f64>| m.keys().map(|t| t.as_str()).collect::<Vec<_>>().join(", ");
        return Err(Error::Validation(format!(
            "task weights cover [{}] but scores cover [{}]",
            names(weights),
            names(per_task)
        )));
    }
    if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Validation("task weights must be finite and nonnegative".into()));
    }
    let sum: f64 = weights.values().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Validation(format!("task weights sum to {sum}, expected 1")));
    }
    Ok(per_task.iter().map(|(t, s)| weights[t] * s).sum())
}

/// The most frequent `task` label of `train`, repeated `n` times.
pub fn majority_baseline(train: &DatasetSplit, task: TaskId, schema: &LabelSchema, n: usize) -> Result<Vec<String>> {
    let label = label_distribution(train, task, schema)?.majority().to_string();
    Ok(vec![label; n])
}
