use std::collections::BTreeMap;

use super::schema::{LabelSchema, TaskId};
use super::split::DatasetSplit;
use crate::error::{Error, Result};

/// Per-label counts for one task, in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDistribution {
    pub task: TaskId,
    pub counts: Vec<(String, usize)>,
}

impl LabelDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|(_, c)| c).sum()
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.counts.iter().find(|(l, _)| l == label).map(|(_, c)| *c)
    }

    pub fn as_map(&self) -> BTreeMap<String, usize> {
        self.counts.iter().cloned().collect()
    }

    /// Most frequent label; ties go to the label listed first in the schema.
    pub fn majority(&self) -> &str {
        let mut best = &self.counts[0];
        for entry in &self.counts[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        &best.0
    }
}

/// Counts gold labels of `task`. Labels with no occurrences are listed with
/// a zero count so tables line up across splits.
pub fn label_distribution(split: &DatasetSplit, task: TaskId, schema: &LabelSchema) -> Result<LabelDistribution> {
    if schema.task != task {
        return Err(Error::Validation(format!(
            "schema is for {}, asked for {task}",
            schema.task
        )));
    }
    let mut counts = vec![0usize; schema.len()];
    let mut labeled = 0usize;
    for s in &split.samples {
        if let Some(label) = s.label(task) {
            counts[schema.require_index(label, &format!("sample {:?}", s.id))?] += 1;
            labeled += 1;
        }
    }
    if labeled == 0 {
        return Err(Error::Validation(format!(
            "{} split has no gold labels for task {task}",
            split.name
        )));
    }
    Ok(LabelDistribution {
        task,
        counts: schema.labels().iter().cloned().zip(counts).collect(),
    })
}
