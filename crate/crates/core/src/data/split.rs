use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::schema::{SchemaSet, TaskId};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "dev" | "validation" => Ok(SplitName::Dev),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::Validation(format!(
                "unknown split {s:?} (expected train, dev or test)"
            ))),
        }
    }
}

/// One text with whatever gold labels it carries. Test data usually has none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub gold: BTreeMap<TaskId, String>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            gold: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, task: TaskId, label: impl Into<String>) -> Self {
        self.gold.insert(task, label.into());
        self
    }

    pub fn label(&self, task: TaskId) -> Option<&str> {
        self.gold.get(&task).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub samples: Vec<Sample>,
}

impl DatasetSplit {
    /// Builds a split, checking id uniqueness and label membership.
    pub fn new(name: SplitName, samples: Vec<Sample>, schemas: &SchemaSet) -> Result<Self> {
        let split = DatasetSplit { name, samples };
        split.validate(schemas)?;
        Ok(split)
    }

    pub fn validate(&self, schemas: &SchemaSet) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.samples.len());
        for (row, s) in self.samples.iter().enumerate() {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation(format!(
                    "{} split: duplicate sample id {:?} (record {})",
                    self.name,
                    s.id,
                    row + 1
                )));
            }
            for (task, label) in &s.gold {
                schemas.get(*task).require_index(
                    label,
                    &format!("{} split, record {} (id {:?})", self.name, row + 1, s.id),
                )?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    /// Tasks for which at least one sample carries a gold label.
    pub fn labeled_tasks(&self) -> Vec<TaskId> {
        TaskId::ALL
            .into_iter()
            .filter(|t| self.samples.iter().any(|s| s.gold.contains_key(t)))
            .collect()
    }

    /// Ids of samples that lack a label for `task`.
    pub fn missing_labels(&self, task: TaskId) -> Vec<&str> {
        self.samples
            .iter()
            .filter(|s| !s.gold.contains_key(&task))
            .map(|s| s.id.as_str())
            .collect()
    }

    /// Gold labels for `task`, failing on the first unlabeled sample.
    pub fn gold_labels(&self, task: TaskId) -> Result<Vec<String>> {
        self.samples
            .iter()
            .map(|s| {
                s.label(task).map(str::to_string).ok_or_else(|| {
                    Error::Validation(format!(
                        "{} split: sample {:?} has no gold {task} label",
                        self.name, s.id
                    ))
                })
            })
            .collect()
    }

    /// Identity of the split's inputs (ids and texts, in order). Labels
    /// are excluded so that a gold file and an unlabeled copy agree.
    pub fn fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("data");
        for s in &self.samples {
            fp.field(&s.id);
            fp.field(&s.text);
        }
        fp.finish()
    }
}
