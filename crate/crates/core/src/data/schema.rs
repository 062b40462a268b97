use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the three annotation dimensions of the shared task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskId {
    Type,
    Severity,
    Target,
}

impl TaskId {
    pub const ALL: [TaskId; 3] = [TaskId::Type, TaskId::Severity, TaskId::Target];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::Type => "type",
            TaskId::Severity => "severity",
            TaskId::Target => "target",
        }
    }

    pub fn index(self) -> usize {
        match self {
            TaskId::Type => 0,
            TaskId::Severity => 1,
            TaskId::Target => 2,
        }
    }

    /// Column / field names accepted for this task in data files. The
    /// official release uses `hate_type`, `hate_severity` and `to_whom`.
    pub fn aliases(self) -> &'static [&'static str] {
        match self {
            TaskId::Type => &["type", "hate_type"],
            TaskId::Severity => &["severity", "hate_severity"],
            TaskId::Target => &["target", "to_whom"],
        }
    }

    pub fn from_alias(name: &str) -> Option<TaskId> {
        let name = name.trim();
        TaskId::ALL
            .into_iter()
            .find(|t| t.aliases().iter().any(|a| a.eq_ignore_ascii_case(name)))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::from_alias(s).ok_or_else(|| Error::Validation(format!("unknown task id {s:?}")))
    }
}

/// A value for each of the three tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerTask<T> {
    #[serde(rename = "type")]
    pub type_: T,
    pub severity: T,
    pub target: T,
}

impl<T> PerTask<T> {
    pub fn new(type_: T, severity: T, target: T) -> Self {
        PerTask {
            type_,
            severity,
            target,
        }
    }

    pub fn from_fn(mut f: impl FnMut(TaskId) -> T) -> Self {
        PerTask {
            type_: f(TaskId::Type),
            severity: f(TaskId::Severity),
            target: f(TaskId::Target),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (TaskId, &T)> {
        TaskId::ALL.into_iter().map(move |t| (t, &self[t]))
    }
}

impl<T> Index<TaskId> for PerTask<T> {
    type Output = T;

    fn index(&self, task: TaskId) -> &T {
        match task {
            TaskId::Type => &self.type_,
            TaskId::Severity => &self.severity,
            TaskId::Target => &self.target,
        }
    }
}

impl<T> IndexMut<TaskId> for PerTask<T> {
    fn index_mut(&mut self, task: TaskId) -> &mut T {
        match task {
            TaskId::Type => &mut self.type_,
            TaskId::Severity => &mut self.severity,
            TaskId::Target => &mut self.target,
        }
    }
}

pub const TYPE_LABELS: [&str; 6] = [
    "None",
    "Abusive",
    "Political Hate",
    "Profane",
    "Religious Hate",
    "Sexism",
];

pub const SEVERITY_LABELS: [&str; 3] = ["Little to None", "Mild", "Severe"];

/// "None" is kept as a real class: every sample carries a target label,
/// including the ones that are not hateful at all.
pub const TARGET_LABELS: [&str; 5] = ["None", "Individual", "Organization", "Community", "Society"];

/// Ordered label set of one task. Label order is the class index order
/// used by heads, prediction matrices and confusion matrices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub task: TaskId,
    labels: Vec<String>,
}

impl LabelSchema {
    pub fn new(task: TaskId, labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Validation(format!("schema for {task} has no labels")));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Validation(format!("schema for {task} repeats label {l:?}")));
            }
        }
        Ok(LabelSchema { task, labels })
    }

    /// The shared-task schema for `task`.
    pub fn standard(task: TaskId) -> Self {
        let labels: &[&str] = match task {
            TaskId::Type => &TYPE_LABELS,
            TaskId::Severity => &SEVERITY_LABELS,
            TaskId::Target => &TARGET_LABELS,
        };
        LabelSchema {
            task,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    pub fn require_index(&self, label: &str, context: &str) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::UnknownLabel {
            task: self.task,
            label: label.to_string(),
            context: context.to_string(),
        })
    }
}

/// Schemas for all three tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSet(PerTask<LabelSchema>);

impl SchemaSet {
    pub fn standard() -> Self {
        SchemaSet(PerTask::from_fn(LabelSchema::standard))
    }

    pub fn from_schemas(schemas: Vec<LabelSchema>) -> Result<Self> {
        let mut slots: PerTask<Option<LabelSchema>> = PerTask::default();
        for s in schemas {
            let task = s.task;
            if slots[task].replace(s).is_some() {
                return Err(Error::Validation(format!("duplicate schema for {task}")));
            }
        }
        let mut missing = Vec::new();
        for t in TaskId::ALL {
            if slots[t].is_none() {
                missing.push(t.as_str());
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation(format!("missing schema for {}", missing.join(", "))));
        }
        Ok(SchemaSet(PerTask::from_fn(|t| slots[t].take().unwrap())))
    }

    pub fn get(&self, task: TaskId) -> &LabelSchema {
        &self.0[task]
    }
}

impl Default for SchemaSet {
    fn default() -> Self {
        SchemaSet::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schema_sizes() {
        assert_eq!(LabelSchema::standard(TaskId::Type).len(), 6);
        assert_eq!(LabelSchema::standard(TaskId::Severity).len(), 3);
        assert_eq!(LabelSchema::standard(TaskId::Target).len(), 5);
    }

    #[test]
    fn aliases_resolve() {
        assert_eq!(TaskId::from_alias("hate_type"), Some(TaskId::Type));
        assert_eq!(TaskId::from_alias("to_whom"), Some(TaskId::Target));
        assert_eq!(TaskId::from_alias("Severity"), Some(TaskId::Severity));
        assert_eq!(TaskId::from_alias("text"), None);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = LabelSchema::new(TaskId::Type, vec!["A".into(), "A".into()]);
        assert!(err.is_err());
    }

    #[test]
    fn unknown_label_names_task() {
        let s = LabelSchema::standard(TaskId::Type);
        let e = s.require_index("Sexsim", "row 2").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("Sexsim") && msg.contains("type") && msg.contains("row 2"));
    }
}
