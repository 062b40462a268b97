//! Text encoders producing one pooled vector per text.
//!
//! Three families share one interface:
//!
//! * **transformer**: a BERT/ELECTRA checkpoint found through the
//!   [`BackboneResolver`], pooled at the `[CLS]` position;
//! * **recurrent**: BiLSTM or BiGRU over GloVe / fastText / random word
//!   embeddings, pooled as the concatenated final states of both directions;
//! * **toy**: hashed character 1–3-gram counts, L2-normalised. Needs no
//!   weights, has no parameters, and is bit-reproducible.

mod backbone;
mod config;
mod embeddings;
mod recurrent;
mod text;
mod toy;
pub mod transformer;
mod wordpiece;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backbone::{canonical_backbone_id, BackboneResolver, CACHE_DIR_ENV, KNOWN_BACKBONES};
pub use config::{
    EmbeddingSource, EncoderConfig, EncoderFamily, RawEncoderConfig, RecurrentCell, DEFAULT_EMBEDDING_DIM,
    DEFAULT_MAX_LENGTH,
};
pub use embeddings::load_word_vectors;
pub use recurrent::RecurrentEncoder;
pub use text::{split_words, Vocab};
pub use toy::ToyEncoder;
pub use transformer::{BertArch, TransformerEncoder};
pub use wordpiece::WordPiece;

use crate::autograd::{Graph, Matrix, ParamStore, Var};
use crate::error::{Error, Result};

/// Token ids padded to `max_length`; the first `length` are real tokens
/// (special tokens included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub length: usize,
}

impl TokenSequence {
    pub fn content(&self) -> &[u32] {
        &self.ids[..self.length]
    }
}

/// Pooled vectors for a batch, one row per input text.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub vectors: Matrix,
    pub attention_lengths: Vec<usize>,
}

impl EncodedBatch {
    pub fn new(vectors: Matrix, attention_lengths: Vec<usize>) -> Result<Self> {
        if vectors.nrows() != attention_lengths.len() {
            return Err(Error::Runtime("encoded batch: row/length count mismatch".into()));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::Runtime(format!(
                "encoder produced a non-finite value in row {}",
                pos / vectors.ncols().max(1)
            )));
        }
        Ok(EncodedBatch {
            vectors,
            attention_lengths,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hidden_dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// What a checkpoint must store besides parameters to rebuild an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderState {
    Toy,
    Recurrent {
        vocab: Vec<String>,
    },
    Transformer {
        arch: BertArch,
        vocab: Vec<String>,
        lowercase: bool,
    },
}

#[derive(Debug, Clone)]
pub enum Encoder {
    Toy(ToyEncoder),
    Recurrent(RecurrentEncoder),
    Transformer(Box<TransformerEncoder>),
}

/// Texts per graph when encoding outside training.
const ENCODE_CHUNK: usize = 32;

impl Encoder {
    /// Builds a fresh encoder, registering its parameters in `params`.
    /// `train_texts` supplies the recurrent vocabulary.
    pub fn build(
        config: &EncoderConfig,
        train_texts: &[&str],
        resolver: &BackboneResolver,
        rng: &mut ChaCha8Rng,
        params: &mut ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        match &config.family {
            EncoderFamily::Toy { hash_seed } => Ok(Encoder::Toy(ToyEncoder {
                hidden_dim: config.hidden_dim,
                max_length: config.max_length,
                hash_seed: *hash_seed,
            })),
            EncoderFamily::Recurrent {
                cell,
                embedding_source,
                embedding_dim,
                embedding_path,
            } => {
                let vocab = Vocab::build(train_texts.iter().copied());
                let vectors = match (embedding_source, embedding_path) {
                    (EmbeddingSource::Random, _) => None,
                    (_, Some(p)) => Some(resolver.resolve_file(p)?),
                    (_, None) => return Err(Error::Config("pretrained embeddings need embedding_path".into())),
                };
                let enc = RecurrentEncoder::new(
                    *cell,
                    vocab,
                    config.hidden_dim,
                    *embedding_dim,
                    config.max_length,
                    rng,
                    params,
                    |vocab, table| {
                        if let Some(path) = vectors {
                            load_word_vectors(&path, vocab, table)?;
                        }
                        Ok(())
                    },
                )?;
                Ok(Encoder::Recurrent(enc))
            }
            EncoderFamily::Transformer { backbone_id } => {
                let dir = resolver.resolve(backbone_id)?;
                let enc = TransformerEncoder::load(&dir, config.max_length, config.hidden_dim, params)?;
                Ok(Encoder::Transformer(Box::new(enc)))
            }
        }
    }

    /// Rebuilds an encoder around parameters loaded from a checkpoint.
    pub fn restore(config: &EncoderConfig, state: EncoderState, params: &ParamStore) -> Result<Self> {
        match (&config.family, state) {
            (EncoderFamily::Toy { hash_seed }, EncoderState::Toy) => Ok(Encoder::Toy(ToyEncoder {
                hidden_dim: config.hidden_dim,
                max_length: config.max_length,
                hash_seed: *hash_seed,
            })),
            (EncoderFamily::Recurrent { cell, .. }, EncoderState::Recurrent { vocab }) => {
                Ok(Encoder::Recurrent(RecurrentEncoder::restore(
                    *cell,
                    Vocab::from_words(vocab),
                    config.hidden_dim,
                    config.max_length,
                    params,
                )?))
            }
            (EncoderFamily::Transformer { .. }, EncoderState::Transformer { arch, vocab, lowercase }) => {
                let tok = WordPiece::new(vocab, lowercase)?;
                Ok(Encoder::Transformer(Box::new(TransformerEncoder::restore(
                    arch,
                    tok,
                    config.max_length,
                    params,
                )?)))
            }
            _ => Err(Error::Config(
                "checkpoint encoder state does not match the configured family".into(),
            )),
        }
    }

    pub fn state(&self) -> EncoderState {
        match self {
            Encoder::Toy(_) => EncoderState::Toy,
            Encoder::Recurrent(r) => EncoderState::Recurrent {
                vocab: r.vocab().words().to_vec(),
            },
            Encoder::Transformer(t) => EncoderState::Transformer {
                arch: t.arch().clone(),
                vocab: t.tokenizer().tokens().to_vec(),
                lowercase: t.tokenizer().lowercase(),
            },
        }
    }

    /// Whether the encoder has parameters that training updates.
    pub fn is_trainable(&self) -> bool {
        !matches!(self, Encoder::Toy(_))
    }

    pub fn tokenize_truncate(&self, text: &str) -> TokenSequence {
        match self {
            Encoder::Toy(t) => t.tokenize_truncate(text),
            Encoder::Recurrent(r) => r.tokenize_truncate(text),
            Encoder::Transformer(t) => t.tokenize_truncate(text),
        }
    }

    /// Pooled vectors as a graph node (B × hidden_dim).
    pub fn forward(&self, g: &mut Graph, texts: &[&str]) -> Var {
        match self {
            Encoder::Toy(t) => g.constant(t.encode(texts)),
            Encoder::Recurrent(r) => {
                let seqs: Vec<_> = texts.iter().map(|t| r.tokenize_truncate(t)).collect();
                r.forward(g, &seqs)
            }
            Encoder::Transformer(t) => {
                let seqs: Vec<_> = texts.iter().map(|s| t.tokenize_truncate(s)).collect();
                t.forward(g, &seqs)
            }
        }
    }

    /// Inference-mode encoding.
    pub fn encode(&self, params: &ParamStore, texts: &[&str]) -> Result<EncodedBatch> {
        let lengths: Vec<usize> = texts.iter().map(|t| self.tokenize_truncate(t).length).collect();
        let vectors = match self {
            Encoder::Toy(t) => t.encode(texts),
            _ => {
                let mut parts = Vec::new();
                for chunk in texts.chunks(ENCODE_CHUNK) {
                    let mut g = Graph::new(params);
                    let v = self.forward(&mut g, chunk);
                    parts.push(g.value(v).clone());
                }
                if parts.is_empty() {
                    Matrix::zeros((0, 0))
                } else {
                    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
                    ndarray::concatenate(ndarray::Axis(0), &views).expect("chunks share width")
                }
            }
        };
        EncodedBatch::new(vectors, lengths)
    }
}
