use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint;

pub const DEFAULT_MAX_LENGTH: usize = 128;
pub const DEFAULT_EMBEDDING_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentCell {
    Bilstm,
    Bigru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Glove,
    Fasttext,
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderFamily {
    /// Pretrained BERT-style checkpoint resolved from `backbone_id`.
    Transformer { backbone_id: String },
    /// Bidirectional recurrent network over word embeddings.
    Recurrent {
        cell: RecurrentCell,
        embedding_source: EmbeddingSource,
        embedding_dim: usize,
        /// Word-vector file; required unless the source is `random`.
        embedding_path: Option<String>,
    },
    /// Hashed character n-gram counts; needs no weights.
    Toy { hash_seed: u64 },
}

impl EncoderFamily {
    pub fn name(&self) -> &'static str {
        match self {
            EncoderFamily::Transformer { .. } => "transformer",
            EncoderFamily::Recurrent { .. } => "recurrent",
            EncoderFamily::Toy { .. } => "toy",
        }
    }
}

/// How texts become fixed-width vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawEncoderConfig", into = "RawEncoderConfig")]
pub struct EncoderConfig {
    pub family: EncoderFamily,
    pub max_length: usize,
    pub hidden_dim: usize,
}

impl EncoderConfig {
    pub fn toy(hidden_dim: usize) -> Self {
        EncoderConfig {
            family: EncoderFamily::Toy { hash_seed: 0 },
            max_length: DEFAULT_MAX_LENGTH,
            hidden_dim,
        }
    }

    pub fn recurrent(cell: RecurrentCell, hidden_dim: usize, embedding_dim: usize) -> Self {
        EncoderConfig {
            family: EncoderFamily::Recurrent {
                cell,
                embedding_source: EmbeddingSource::Random,
                embedding_dim,
                embedding_path: None,
            },
            max_length: DEFAULT_MAX_LENGTH,
            hidden_dim,
        }
    }

    pub fn transformer(backbone_id: impl Into<String>, hidden_dim: usize) -> Self {
        EncoderConfig {
            family: EncoderFamily::Transformer {
                backbone_id: backbone_id.into(),
            },
            max_length: DEFAULT_MAX_LENGTH,
            hidden_dim,
        }
    }

    pub fn with_max_length(mut self, max_length: usize) -> Self {
        self.max_length = max_length;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_length < 1 {
            return Err(Error::Config("max_length must be at least 1".into()));
        }
        if self.hidden_dim < 1 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        match &self.family {
            EncoderFamily::Transformer { backbone_id } => {
                if backbone_id.trim().is_empty() {
                    return Err(Error::Config("transformer encoder needs a backbone_id".into()));
                }
            }
            EncoderFamily::Recurrent {
                embedding_source,
                embedding_dim,
                embedding_path,
                ..
            } => {
                if !self.hidden_dim.is_multiple_of(2) {
                    return Err(Error::Config(format!(
                        "recurrent hidden_dim {} must be even (two directions)",
                        self.hidden_dim
                    )));
                }
                if *embedding_dim < 1 {
                    return Err(Error::Config("embedding_dim must be at least 1".into()));
                }
                match (embedding_source, embedding_path) {
                    (EmbeddingSource::Random, Some(_)) => {
                        return Err(Error::Config(
                            "embedding_path given but embedding_source is random".into(),
                        ))
                    }
                    (EmbeddingSource::Glove | EmbeddingSource::Fasttext, None) => {
                        return Err(Error::Config("glove/fasttext embeddings need an embedding_path".into()))
                    }
                    _ => {}
                }
            }
            EncoderFamily::Toy { .. } => {}
        }
        Ok(())
    }

    /// Identity of everything that changes the encoder's function. The
    /// embedding file location is left out: once trained, the vectors live
    /// in the model weights.
    pub fn fingerprint(&self) -> String {
        let mut raw = RawEncoderConfig::from(self.clone());
        raw.embedding_path = None;
        fingerprint::of_json("encoder", &raw)
    }

    /// Short human-readable name, used as a default model id.
    pub fn short_name(&self) -> String {
        match &self.family {
            EncoderFamily::Transformer { backbone_id } => {
                backbone_id.rsplit('/').next().unwrap_or(backbone_id).to_string()
            }
            EncoderFamily::Recurrent {
                cell, embedding_source, ..
            } => format!("{cell:?}-{embedding_source:?}").to_lowercase(),
            EncoderFamily::Toy { .. } => "toy".to_string(),
        }
    }
}

impl fmt::Display for EncoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (hidden_dim={}, max_length={})",
            self.short_name(),
            self.hidden_dim,
            self.max_length
        )
    }
}

/// Flat on-disk form. Family-specific keys must appear exactly for the
/// family that uses them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawEncoderConfig {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone_id: Option<String>,
    #[serde(default = "default_max_length")]
    pub max_length: usize,
    pub hidden_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recurrent_cell: Option<RecurrentCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_source: Option<EmbeddingSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_seed: Option<u64>,
}

fn default_max_length() -> usize {
    DEFAULT_MAX_LENGTH
}

impl TryFrom<RawEncoderConfig> for EncoderConfig {
    type Error = Error;

    fn try_from(raw: RawEncoderConfig) -> Result<Self> {
        let stray = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::Config(format!(
                    "`{field}` does not apply to the {} encoder family",
                    raw.family
                )))
            } else {
                Ok(())
            }
        };
        let family = match raw.family.as_str() {
            "transformer" => {
                stray("recurrent_cell", raw.recurrent_cell.is_some())?;
                stray("embedding_source", raw.embedding_source.is_some())?;
                stray("embedding_dim", raw.embedding_dim.is_some())?;
                stray("embedding_path", raw.embedding_path.is_some())?;
                stray("hash_seed", raw.hash_seed.is_some())?;
                EncoderFamily::Transformer {
                    backbone_id: raw
                        .backbone_id
                        .clone()
                        .ok_or_else(|| Error::Config("transformer encoder needs backbone_id".into()))?,
                }
            }
            "recurrent" => {
                stray("backbone_id", raw.backbone_id.is_some())?;
                stray("hash_seed", raw.hash_seed.is_some())?;
                EncoderFamily::Recurrent {
                    cell: raw
                        .recurrent_cell
                        .ok_or_else(|| Error::Config("recurrent encoder needs recurrent_cell".into()))?,
                    embedding_source: raw.embedding_source.unwrap_or(EmbeddingSource::Random),
                    embedding_dim: raw.embedding_dim.unwrap_or(DEFAULT_EMBEDDING_DIM),
                    embedding_path: raw.embedding_path.clone(),
                }
            }
            "toy" => {
                stray("backbone_id", raw.backbone_id.is_some())?;
                stray("recurrent_cell", raw.recurrent_cell.is_some())?;
                stray("embedding_source", raw.embedding_source.is_some())?;
                stray("embedding_dim", raw.embedding_dim.is_some())?;
                stray("embedding_path", raw.embedding_path.is_some())?;
                EncoderFamily::Toy {
                    hash_seed: raw.hash_seed.unwrap_or(0),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown encoder family {other:?} (expected transformer, recurrent or toy)"
                )))
            }
        };
        let config = EncoderConfig {
            family,
            max_length: raw.max_length,
            hidden_dim: raw.hidden_dim,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<EncoderConfig> for RawEncoderConfig {
    fn from(c: EncoderConfig) -> Self {
        let mut raw = RawEncoderConfig {
            family: c.family.name().to_string(),
            backbone_id: None,
            max_length: c.max_length,
            hidden_dim: c.hidden_dim,
            recurrent_cell: None,
            embedding_source: None,
            embedding_dim: None,
            embedding_path: None,
            hash_seed: None,
        };
        match c.family {
            EncoderFamily::Transformer { backbone_id } => raw.backbone_id = Some(backbone_id),
            EncoderFamily::Recurrent {
                cell,
                embedding_source,
                embedding_dim,
                embedding_path,
            } => {
                raw.recurrent_cell = Some(cell);
                raw.embedding_source = Some(embedding_source);
                raw.embedding_dim = Some(embedding_dim);
                raw.embedding_path = embedding_path;
            }
            EncoderFamily::Toy { hash_seed } => raw.hash_seed = Some(hash_seed),
        }
        raw
    }
}
