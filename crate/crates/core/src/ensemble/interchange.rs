//! JSON interchange file for prediction matrices.
//!
//! ```json
//! {
//!   "format": "hatefuse-predictions/1",
//!   "model_id": "muril",
//!   "task": "type",
//!   "labels": ["None", "Abusive", ...],
//!   "model_fingerprint": "3f1c...",
//!   "data_fingerprint": "9a0b...",
//!   "fusion": {"method": "weighted", "members": [...], "weights": [...]},
//!   "rows": [
//!     {"id": "s1", "probs": [0.91, 0.01, ...]},
//!     ...
//!   ]
//! }
//! ```
//!
//! `fusion` appears only on fused files. Each row sits on its own line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::PredictionMatrix;
use super::spec::{EnsembleSpec, FusionMethod};
use super::vote::TieBreak;
use crate::autograd::Matrix;
use crate::data::TaskId;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

pub const PREDICTIONS_FORMAT: &str = "hatefuse-predictions/1";

/// How a fused file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub method: FusionMethod,
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_break: Option<TieBreak>,
}

/// A prediction matrix plus the provenance needed to refuse mixing
/// outputs of different models or datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionFile {
    pub matrix: PredictionMatrix,
    pub model_fingerprint: String,
    pub data_fingerprint: String,
    pub fusion: Option<FusionRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    model_id: String,
    task: TaskId,
    labels: Vec<String>,
    model_fingerprint: String,
    data_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fusion: Option<FusionRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    id: String,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    model_id: String,
    task: TaskId,
    labels: Vec<String>,
    model_fingerprint: String,
    data_fingerprint: String,
    #[serde(default)]
    fusion: Option<FusionRecord>,
    rows: Vec<Row>,
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

impl PredictionFile {
    pub fn to_json(&self) -> String {
        let m = &self.matrix;
        let header = Header {
            format: PREDICTIONS_FORMAT.into(),
            model_id: m.model_id.clone(),
            task: m.task,
            labels: m.labels.clone(),
            model_fingerprint: self.model_fingerprint.clone(),
            data_fingerprint: self.data_fingerprint.clone(),
            fusion: self.fusion.clone(),
        };
        let header = serde_json::to_string_pretty(&header).expect("plain data serializes");
        let mut out = header.trim_end_matches('}').trim_end().to_string();
        out.push_str(",\n  \"rows\": [");
        for (i, (id, probs)) in m.sample_ids.iter().zip(m.probs.rows()).enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str("\n    ");
            out.push_str(&json(&Row {
                id: id.clone(),
                probs: probs.to_vec(),
            }));
        }
        out.push_str(if m.is_empty() { "]\n}\n" } else { "\n  ]\n}\n" });
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let doc: Document = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: source.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != PREDICTIONS_FORMAT {
            return Err(Error::Validation(format!(
                "{}: unsupported predictions format {:?}",
                source.display(),
                doc.format
            )));
        }
        let c = doc.labels.len();
        let mut probs = Matrix::zeros((doc.rows.len(), c));
        let mut ids = Vec::with_capacity(doc.rows.len());
        for (i, row) in doc.rows.into_iter().enumerate() {
            if row.probs.len() != c {
                return Err(Error::Validation(format!(
                    "{}: row for {:?} has {} entries, expected {c}",
                    source.display(),
                    row.id,
                    row.probs.len()
                )));
            }
            for (j, p) in row.probs.into_iter().enumerate() {
                probs[(i, j)] = p;
            }
            ids.push(row.id);
        }
        let matrix = PredictionMatrix::new(doc.model_id, doc.task, doc.labels, probs, ids)
            .map_err(|e| Error::Validation(format!("{}: {e}", source.display())))?;
        Ok(PredictionFile {
            matrix,
            model_fingerprint: doc.model_fingerprint,
            data_fingerprint: doc.data_fingerprint,
            fusion: doc.fusion,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PredictionFile::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Fuses member files. All members must describe the same data; the
    /// fused file's model fingerprint is derived from the method, the
    /// weights and the members' fingerprints.
    pub fn fuse(spec: &EnsembleSpec, inputs: &[PredictionFile]) -> Result<PredictionFile> {
        let ids: Vec<&str> = inputs.iter().map(|f| f.matrix.model_id.as_str()).collect();
        let chosen: Vec<&PredictionFile> = spec.member_indices(&ids)?.into_iter().map(|i| &inputs[i]).collect();
        if let Some(first) = chosen.first() {
            for f in &chosen[1..] {
                if f.data_fingerprint != first.data_fingerprint {
                    return Err(Error::FingerprintMismatch {
                        context: format!("data behind {} vs {}", f.matrix.model_id, first.matrix.model_id),
                        expected: first.data_fingerprint.clone(),
                        found: f.data_fingerprint.clone(),
                    });
                }
            }
        }
        let matrices: Vec<PredictionMatrix> = inputs.iter().map(|f| f.matrix.clone()).collect();
        let matrix = spec.fuse(&matrices)?;
        let members: Vec<String> = chosen.iter().map(|f| f.matrix.model_id.clone()).collect();
        let mut fp = Fingerprinter::new("fusion");
        fp.field(spec.method.as_str());
        for f in &chosen {
            fp.field(&f.model_fingerprint);
        }
        if let Some(w) = &spec.weights {
            fp.field(&json(w));
        }
        if spec.method == FusionMethod::Hard {
            fp.field(&json(&spec.tie_break));
        }
        Ok(PredictionFile {
            matrix,
            model_fingerprint: fp.finish(),
            data_fingerprint: chosen.first().map(|f| f.data_fingerprint.clone()).unwrap_or_default(),
            fusion: Some(FusionRecord {
                method: spec.method,
                members,
                weights: spec.weights.clone(),
                tie_break: (spec.method == FusionMethod::Hard).then_some(spec.tie_break),
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn file(id: &str, probs: Matrix, data: &str) -> PredictionFile {
        PredictionFile {
            matrix: PredictionMatrix::new(
                id,
                TaskId::Severity,
                vec!["Little to None".into(), "Mild".into(), "Severe".into()],
                probs,
                vec!["7".into(), "3".into()],
            )
            .unwrap(),
            model_fingerprint: format!("fp-{id}"),
            data_fingerprint: data.into(),
            fusion: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let f = file("m", array![[0.1, 0.2, 0.7], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]], "d");
        let text = f.to_json();
        assert_eq!(text.lines().filter(|l| l.contains("\"probs\"")).count(), 2);
        let back = PredictionFile::parse(&text, Path::new("x.json")).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rejects_bad_documents() {
        let f = file("m", array![[0.1, 0.2, 0.7], [0.2, 0.2, 0.6]], "d");
        let text = f.to_json().replace("0.7", "0.9");
        assert!(matches!(
            PredictionFile::parse(&text, Path::new("x")),
            Err(Error::Validation(_))
        ));
        let text = f.to_json().replace(PREDICTIONS_FORMAT, "other/2");
        assert!(PredictionFile::parse(&text, Path::new("x")).is_err());
        assert!(matches!(
            PredictionFile::parse("{", Path::new("x")),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn fusion_records_method_and_checks_data() {
        let a = file("a", array![[0.1, 0.2, 0.7], [0.6, 0.2, 0.2]], "d");
        let b = file("b", array![[0.3, 0.4, 0.3], [0.2, 0.2, 0.6]], "d");
        let spec = EnsembleSpec::weighted(vec!["b".into(), "a".into()], vec![0.75, 0.25]);
        let fused = PredictionFile::fuse(&spec, &[a.clone(), b.clone()]).unwrap();
        let rec = fused.fusion.as_ref().unwrap();
        assert_eq!(rec.members, vec!["b", "a"]);
        assert_eq!(rec.weights, Some(vec![0.75, 0.25]));
        assert!((fused.matrix.probs[(0, 2)] - (0.75 * 0.3 + 0.25 * 0.7)).abs() < 1e-12);
        assert!(fused.to_json().contains("\"method\": \"weighted\""));

        let other = file("b", b.matrix.probs.clone(), "e");
        let e = PredictionFile::fuse(&EnsembleSpec::soft(vec![]), &[a, other]).unwrap_err();
        assert!(matches!(e, Error::FingerprintMismatch { .. }));
    }
}
