use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{equal_task_weights, micro_f1, weighted_micro_f1, ClassRecall, ConfusionMatrix};
use crate::data::{DatasetSplit, SchemaSet, TaskId};
use crate::error::{Error, Result};

/// Classes whose recall falls below this are flagged in error reports.
pub const DEFAULT_RECALL_THRESHOLD: f64 = 0.5;

/// Attached to every weighted score computed with the default weights.
pub const EQUAL_WEIGHTS_NOTE: &str = "equal task weights (1/3 each) by default; the official weighting is unspecified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScore {
    pub value: f64,
    pub weights: BTreeMap<TaskId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_fingerprint: Option<String>,
    pub data_fingerprint: String,
    pub n_samples: usize,
    pub per_task_micro_f1: BTreeMap<TaskId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_micro_f1: Option<WeightedScore>,
    pub confusion: BTreeMap<TaskId, ConfusionMatrix>,
    pub per_class_recall: BTreeMap<TaskId, Vec<ClassRecall>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

/// Scores predicted labels against the gold labels of `split`. The weighted
/// score is reported when all three tasks are predicted; `task_weights`
/// defaults to equal weights.
pub fn evaluate(
    preds: &BTreeMap<TaskId, Vec<String>>,
    split: &DatasetSplit,
    schemas: &SchemaSet,
    task_weights: Option<&BTreeMap<TaskId, f64>>,
) -> Result<MetricsReport> {
    if preds.is_empty() {
        return Err(Error::Validation("no predictions to evaluate".into()));
    }
    let mut report = MetricsReport {
        model_id: None,
        model_fingerprint: None,
        data_fingerprint: split.fingerprint(),
        n_samples: split.len(),
        per_task_micro_f1: BTreeMap::new(),
        weighted_micro_f1: None,
        confusion: BTreeMap::new(),
        per_class_recall: BTreeMap::new(),
    };
    for (&task, pred) in preds {
        let gold = split.gold_labels(task)?;
        let schema = schemas.get(task);
        let f1 = micro_f1(pred, &gold, schema)?;
        let cm = ConfusionMatrix::new(pred, &gold, schema)?;
        report.per_class_recall.insert(task, cm.per_class_recall());
        report.confusion.insert(task, cm);
        report.per_task_micro_f1.insert(task, f1);
    }
    if preds.len() == TaskId::ALL.len() {
        let (weights, note) = match task_weights {
            Some(w) => (w.clone(), None),
            None => (equal_task_weights(&TaskId::ALL), Some(EQUAL_WEIGHTS_NOTE.to_string())),
        };
        report.weighted_micro_f1 = Some(WeightedScore {
            value: weighted_micro_f1(&report.per_task_micro_f1, &weights)?,
            weights,
            note,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorExample {
    pub id: String,
    pub text: String,
    pub gold: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskErrors {
    pub task: TaskId,
    pub total: usize,
    pub errors: usize,
    /// At most `k` misclassified samples, in split order.
    pub examples: Vec<ErrorExample>,
    pub recall: Vec<ClassRecall>,
    /// Labels whose recall is below the threshold.
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub threshold: f64,
    pub tasks: Vec<TaskErrors>,
}

/// Lists up to `k` misclassified samples per task and the per-class recall,
/// flagging classes whose recall is below `threshold`.
pub fn error_report(
    split: &DatasetSplit,
    preds: &BTreeMap<TaskId, Vec<String>>,
    schemas: &SchemaSet,
    k: usize,
    threshold: f64,
) -> Result<ErrorReport> {
    let mut tasks = Vec::new();
    for (&task, pred) in preds {
        let gold = split.gold_labels(task)?;
        let cm = ConfusionMatrix::new(pred, &gold, schemas.get(task))?;
        let wrong: Vec<usize> = (0..gold.len()).filter(|&i| pred[i] != gold[i]).collect();
        let examples = wrong
            .iter()
            .take(k)
            .map(|&i| ErrorExample {
                id: split.samples[i].id.clone(),
                text: split.samples[i].text.clone(),
                gold: gold[i].clone(),
                predicted: pred[i].clone(),
            })
            .collect();
        let recall = cm.per_class_recall();
        let flagged = recall
            .iter()
            .filter(|r| r.recall < threshold)
            .map(|r| r.label.clone())
            .collect();
        tasks.push(TaskErrors {
            task,
            total: gold.len(),
            errors: wrong.len(),
            examples,
            recall,
            flagged,
        });
    }
    Ok(ErrorReport { threshold, tasks })
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace(['\n', '\r', '\t'], " ")
}

impl ErrorReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Error report\n");
        for t in &self.tasks {
            writeln!(out, "\n## {}\n", t.task).unwrap();
            writeln!(
                out,
                "{} of {} samples misclassified; showing {}.\n",
                t.errors,
                t.total,
                t.examples.len()
            )
            .unwrap();
            if !t.examples.is_empty() {
                out.push_str("| id | text | gold | predicted |\n|---|---|---|---|\n");
                for e in &t.examples {
                    writeln!(
                        out,
                        "| {} | {} | {} | {} |",
                        cell(&e.id),
                        cell(&e.text),
                        cell(&e.gold),
                        cell(&e.predicted)
                    )
                    .unwrap();
                }
                out.push('\n');
            }
            out.push_str("| label | support | recall |\n|---|---:|---:|\n");
            for r in &t.recall {
                let mark = if r.recall < self.threshold { " ⚠" } else { "" };
                writeln!(out, "| {} | {} | {:.4}{mark} |", cell(&r.label), r.support, r.recall).unwrap();
            }
            if t.flagged.is_empty() {
                writeln!(out, "\nNo class has recall below {}.", self.threshold).unwrap();
            } else {
                writeln!(out, "\nRecall below {}: {}.", self.threshold, t.flagged.join(", ")).unwrap();
            }
        }
        out
    }
}
