//! Model directories: `model.json` (configuration, fingerprint, encoder
//! state, weight digest) next to `weights.safetensors`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::TrainedModel;
use super::{Head, ModelConfig};
use crate::autograd::ParamStore;
use crate::encoder::{Encoder, EncoderState};
use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;
use crate::safetensors::SafeTensors;

pub const MODEL_FORMAT: &str = "hatefuse-model/1";
pub const MODEL_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format: String,
    fingerprint: String,
    config: ModelConfig,
    encoder_state: EncoderState,
    weights_sha256: String,
}

impl TrainedModel {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut st = SafeTensors::default();
        for (_, p) in self.params.iter() {
            st.insert_matrix(p.name.clone(), &p.value);
        }
        let bytes = st.to_bytes();
        let doc = ModelDocument {
            format: MODEL_FORMAT.into(),
            fingerprint: self.fingerprint.clone(),
            config: self.config.clone(),
            encoder_state: self.encoder.state(),
            weights_sha256: sha256_hex(&bytes),
        };
        let weights = dir.join(WEIGHTS_FILE);
        std::fs::write(&weights, &bytes).map_err(|e| Error::io(&weights, e))?;
        let json = serde_json::to_string_pretty(&doc).expect("plain data serializes") + "\n";
        let meta = dir.join(MODEL_FILE);
        std::fs::write(&meta, json).map_err(|e| Error::io(&meta, e))
    }

    /// Loads a model directory, refusing it when the stored fingerprint does
    /// not match the stored configuration or the weights were altered.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: meta.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Validation(format!(
                "{}: unsupported model format {:?}",
                meta.display(),
                doc.format
            )));
        }
        doc.config.validate()?;
        let computed = doc.config.fingerprint();
        if computed != doc.fingerprint {
            return Err(Error::FingerprintMismatch {
                context: format!("configuration stored in {}", meta.display()),
                expected: doc.fingerprint,
                found: computed,
            });
        }
        let weights = dir.join(WEIGHTS_FILE);
        let bytes = std::fs::read(&weights).map_err(|e| Error::io(&weights, e))?;
        let digest = sha256_hex(&bytes);
        if digest != doc.weights_sha256 {
            return Err(Error::FingerprintMismatch {
                context: format!("weights in {}", weights.display()),
                expected: doc.weights_sha256,
                found: digest,
            });
        }
        let st = SafeTensors::parse(&bytes)?;
        let mut params = ParamStore::new();
        for (name, tensor) in st.tensors {
            params.add(name, tensor.into_matrix()?, false);
        }
        let encoder = Encoder::restore(&doc.config.encoder, doc.encoder_state, &params)?;
        let heads = doc
            .config
            .heads
            .iter()
            .map(|h| Head::restore(doc.config.schemas.get(h.task), doc.config.encoder.hidden_dim, &params))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainedModel {
            config: doc.config,
            encoder,
            params,
            heads,
            fingerprint: doc.fingerprint,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DatasetSplit;
    use crate::data::{Sample, SchemaSet, SplitName, TaskId, TYPE_LABELS};
    use crate::encoder::{BackboneResolver, EncoderConfig, RecurrentCell};
    use crate::model::{predict_proba, train, TrainingConfig};

    fn split() -> DatasetSplit {
        let samples = (0..12)
            .map(|i| {
                Sample::new(format!("{i}"), format!("tok{} common", i % 4)).with_label(TaskId::Type, TYPE_LABELS[i % 4])
            })
            .collect();
        DatasetSplit::new(SplitName::Train, samples, &SchemaSet::standard()).unwrap()
    }

    fn round_trip(enc: EncoderConfig) {
        let cfg = ModelConfig::single(
            "m",
            enc,
            TaskId::Type,
            TrainingConfig {
                epochs: 1,
                learning_rate: 0.01,
                ..TrainingConfig::default()
            },
        );
        let (model, _) = train(&split(), &cfg, &BackboneResolver::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = TrainedModel::load(dir.path()).unwrap();
        assert_eq!(back.fingerprint(), model.fingerprint());
        assert_eq!(
            predict_proba(&back, &split()).unwrap(),
            predict_proba(&model, &split()).unwrap()
        );
    }

    #[test]
    fn toy_and_recurrent_round_trip() {
        round_trip(EncoderConfig::toy(8));
        round_trip(EncoderConfig::recurrent(RecurrentCell::Bigru, 6, 4));
    }

    #[test]
    fn tampering_is_detected() {
        let cfg = ModelConfig::single("m", EncoderConfig::toy(8), TaskId::Type, TrainingConfig::default());
        let (model, _) = train(&split(), &cfg, &BackboneResolver::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let meta = dir.path().join(MODEL_FILE);
        let text = std::fs::read_to_string(&meta).unwrap();
        std::fs::write(&meta, text.replace("\"epochs\": 3", "\"epochs\": 4")).unwrap();
        assert!(matches!(
            TrainedModel::load(dir.path()),
            Err(Error::FingerprintMismatch { .. })
        ));

        model.save(dir.path()).unwrap();
        let w = dir.path().join(WEIGHTS_FILE);
        let mut bytes = std::fs::read(&w).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&w, bytes).unwrap();
        assert!(matches!(
            TrainedModel::load(dir.path()),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
