use std::collections::HashSet;

use crate::autograd::Matrix;
use crate::data::TaskId;
use crate::error::{Error, Result};

/// Rows must sum to one within this tolerance.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Class probabilities of one model for one task: row `i` belongs to
/// `sample_ids[i]`, column `j` to `labels[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub model_id: String,
    pub task: TaskId,
    pub labels: Vec<String>,
    pub probs: Matrix,
    pub sample_ids: Vec<String>,
}

impl PredictionMatrix {
    pub fn new(
        model_id: impl Into<String>,
        task: TaskId,
        labels: Vec<String>,
        probs: Matrix,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let m = PredictionMatrix {
            model_id: model_id.into(),
            task,
            labels,
            probs,
            sample_ids,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, c) = self.probs.dim();
        if c != self.labels.len() {
            return Err(Error::Validation(format!(
                "{}: {} probability columns for {} labels",
                self.model_id,
                c,
                self.labels.len()
            )));
        }
        if n != self.sample_ids.len() {
            return Err(Error::Validation(format!(
                "{}: {} probability rows for {} sample ids",
                self.model_id,
                n,
                self.sample_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &self.sample_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!(
                    "{}: duplicate sample id {id:?}",
                    self.model_id
                )));
            }
        }
        for (row, id) in self.probs.rows().into_iter().zip(&self.sample_ids) {
            let sum: f64 = row.sum();
            let in_range = row
                .iter()
                .all(|&p| p.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&p));
            if !in_range || (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(Error::Validation(format!(
                    "{}: row for sample {id:?} is not a probability distribution (sum {sum})",
                    self.model_id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    /// Index of the largest entry per row; exact ties go to the lowest index.
    pub fn argmax_indices(&self) -> Vec<usize> {
        self.probs
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect()
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Label of the maximal probability per row, ties to the lowest label index.
pub fn argmax_labels(matrix: &PredictionMatrix) -> Vec<String> {
    matrix
        .argmax_indices()
        .into_iter()
        .map(|i| matrix.labels[i].clone())
        .collect()
}

/// Members must agree on task, label order and sample order.
pub fn check_alignment(matrices: &[PredictionMatrix]) -> Result<()> {
    if matrices.len() < 2 {
        return Err(Error::Validation(format!(
            "fusion needs at least 2 members, got {}",
            matrices.len()
        )));
    }
    let first = &matrices[0];
    for m in &matrices[1..] {
        if m.task != first.task {
            return Err(Error::Alignment(format!(
                "{} predicts task {} but {} predicts {}",
                m.model_id, m.task, first.model_id, first.task
            )));
        }
        if m.labels != first.labels {
            return Err(Error::Alignment(format!(
                "label order of {} [{}] differs from {} [{}]",
                m.model_id,
                m.labels.join(", "),
                first.model_id,
                first.labels.join(", ")
            )));
        }
        let n = first.sample_ids.len().max(m.sample_ids.len());
        for i in 0..n {
            let a = first.sample_ids.get(i);
            let b = m.sample_ids.get(i);
            if a != b {
                let id = a.or(b).expect("one side present");
                return Err(Error::Alignment(format!(
                    "sample order of {} differs from {} at row {} (first mismatched sample id {id:?})",
                    m.model_id, first.model_id, i
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn m(id: &str, probs: Matrix, ids: &[&str]) -> PredictionMatrix {
        PredictionMatrix::new(
            id,
            TaskId::Severity,
            vec!["A".into(), "B".into()],
            probs,
            ids.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn argmax_rules() {
        let p = PredictionMatrix::new(
            "m",
            TaskId::Type,
            vec!["A".into(), "B".into(), "C".into()],
            array![[0.2, 0.5, 0.3], [0.4, 0.2, 0.4]],
            vec!["1".into(), "2".into()],
        )
        .unwrap();
        assert_eq!(argmax_labels(&p), vec!["B", "A"]);
        let tie = m("t", array![[0.5, 0.5]], &["x"]);
        assert_eq!(argmax_labels(&tie), vec!["A"]);
    }

    #[test]
    fn rejects_off_simplex_rows() {
        let e = PredictionMatrix::new(
            "m",
            TaskId::Type,
            vec!["A".into(), "B".into()],
            array![[0.5, 0.6]],
            vec!["1".into()],
        );
        assert!(matches!(e, Err(Error::Validation(_))));
        let e = PredictionMatrix::new(
            "m",
            TaskId::Type,
            vec!["A".into(), "B".into()],
            array![[0.5, 0.5], [0.5, 0.5]],
            vec!["1".into(), "1".into()],
        );
        assert!(e.is_err());
    }

    #[test]
    fn alignment_names_first_mismatch() {
        let a = m("a", array![[1.0, 0.0], [0.0, 1.0]], &["s1", "s2"]);
        let b = m("b", array![[1.0, 0.0], [0.0, 1.0]], &["s1", "s3"]);
        let e = check_alignment(&[a.clone(), b]).unwrap_err().to_string();
        assert!(e.contains("\"s2\""), "{e}");
        let mut c = a.clone();
        c.labels = vec!["B".into(), "A".into()];
        assert!(matches!(check_alignment(&[a.clone(), c]), Err(Error::Alignment(_))));
        assert!(matches!(check_alignment(&[a]), Err(Error::Validation(_))));
    }
}
