//! BERT / ELECTRA-discriminator encoder loaded from a local checkpoint
//! directory (`config.json`, `vocab.txt`, `*.safetensors`). The pooled
//! vector is the final hidden state at the `[CLS]` position.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::wordpiece::WordPiece;
use super::TokenSequence;
use crate::autograd::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::safetensors::{self, SafeTensors};

/// Architecture fields read from a Hugging Face `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BertArch {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    /// ELECTRA checkpoints may use a narrower embedding projected up to
    /// `hidden_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_type: Option<String>,
}

fn default_type_vocab() -> usize {
    2
}
fn default_eps() -> f64 {
    1e-12
}
fn default_act() -> String {
    "gelu".into()
}

impl BertArch {
    fn embedding_width(&self) -> usize {
        self.embedding_size.unwrap_or(self.hidden_size)
    }

    fn validate(&self) -> Result<()> {
        if self.num_attention_heads == 0 || !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return Err(Error::Config(format!(
                "hidden_size {} is not divisible by {} attention heads",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if self.hidden_act != "gelu" {
            return Err(Error::Config(format!(
                "unsupported activation {:?} (only exact gelu)",
                self.hidden_act
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Linear {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: Norm,
    ffn_in: Linear,
    ffn_out: Linear,
    ffn_norm: Norm,
}

#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    arch: BertArch,
    tokenizer: WordPiece,
    max_length: usize,
    word: ParamId,
    position: ParamId,
    token_type: ParamId,
    emb_norm: Norm,
    project: Option<Linear>,
    layers: Vec<Layer>,
}

/// Internal parameter name and the checkpoint names it may appear under
/// (before the `bert.` / `electra.` prefix).
fn tensor_names(arch: &BertArch) -> Vec<(String, Vec<String>, bool)> {
    let mut out = Vec::new();
    let mut push = |internal: String, hf: Vec<String>, decay: bool| out.push((internal, hf, decay));
    let v = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    push(
        "encoder.emb.word".into(),
        v(&["embeddings.word_embeddings.weight"]),
        true,
    );
    push(
        "encoder.emb.position".into(),
        v(&["embeddings.position_embeddings.weight"]),
        true,
    );
    push(
        "encoder.emb.token_type".into(),
        v(&["embeddings.token_type_embeddings.weight"]),
        true,
    );
    push(
        "encoder.emb.norm.gamma".into(),
        v(&["embeddings.LayerNorm.weight", "embeddings.LayerNorm.gamma"]),
        false,
    );
    push(
        "encoder.emb.norm.beta".into(),
        v(&["embeddings.LayerNorm.bias", "embeddings.LayerNorm.beta"]),
        false,
    );
    if arch.embedding_width() != arch.hidden_size {
        push(
            "encoder.emb.project.weight".into(),
            v(&["embeddings_project.weight"]),
            true,
        );
        push(
            "encoder.emb.project.bias".into(),
            v(&["embeddings_project.bias"]),
            false,
        );
    }
    for i in 0..arch.num_hidden_layers {
        let p = format!("encoder.layer.{i}");
        let hf = format!("encoder.layer.{i}");
        for (name, path) in [
            ("query", "attention.self.query"),
            ("key", "attention.self.key"),
            ("value", "attention.self.value"),
            ("attn_out", "attention.output.dense"),
            ("ffn_in", "intermediate.dense"),
            ("ffn_out", "output.dense"),
        ] {
            push(format!("{p}.{name}.weight"), vec![format!("{hf}.{path}.weight")], true);
            push(format!("{p}.{name}.bias"), vec![format!("{hf}.{path}.bias")], false);
        }
        for (name, path) in [
            ("attn_norm", "attention.output.LayerNorm"),
            ("ffn_norm", "output.LayerNorm"),
        ] {
            push(
                format!("{p}.{name}.gamma"),
                vec![format!("{hf}.{path}.weight"), format!("{hf}.{path}.gamma")],
                false,
            );
            push(
                format!("{p}.{name}.beta"),
                vec![format!("{hf}.{path}.bias"), format!("{hf}.{path}.beta")],
                false,
            );
        }
    }
    out
}

fn expected_shape(arch: &BertArch, internal: &str) -> (usize, usize) {
    let h = arch.hidden_size;
    let e = arch.embedding_width();
    let i = arch.intermediate_size;
    let tail = internal.rsplit('.').next().unwrap();
    let kind = internal.rsplit_once('.').unwrap().0.rsplit('.').next().unwrap();
    match (kind, tail) {
        ("emb", "word") => (arch.vocab_size, e),
        ("emb", "position") => (arch.max_position_embeddings, e),
        ("emb", "token_type") => (arch.type_vocab_size, e),
        ("norm", _) if internal.starts_with("encoder.emb.") => (1, e),
        ("project", "weight") => (h, e),
        ("project", "bias") => (1, h),
        ("ffn_in", "weight") => (i, h),
        ("ffn_in", "bias") => (1, i),
        ("ffn_out", "weight") => (h, i),
        (_, "weight") => (h, h),
        _ => (1, h),
    }
}

impl TransformerEncoder {
    /// Loads a checkpoint directory into `params`.
    pub fn load(dir: &Path, max_length: usize, hidden_dim: usize, params: &mut ParamStore) -> Result<Self> {
        let config_path = dir.join("config.json");
        let config_text = std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let arch: BertArch =
            serde_json::from_str(&config_text).map_err(|e| Error::Config(format!("{}: {e}", config_path.display())))?;
        arch.validate()?;
        if arch.hidden_size != hidden_dim {
            return Err(Error::Config(format!(
                "hidden_dim {hidden_dim} does not match the backbone's hidden_size {}",
                arch.hidden_size
            )));
        }
        if max_length > arch.max_position_embeddings {
            return Err(Error::Config(format!(
                "max_length {max_length} exceeds the backbone's {} positions",
                arch.max_position_embeddings
            )));
        }
        let lowercase = read_lowercase(dir)?;
        let tokenizer = WordPiece::from_file(&dir.join("vocab.txt"), lowercase)?;
        if tokenizer.len() > arch.vocab_size {
            return Err(Error::Config(format!(
                "vocab.txt has {} entries but the model only {}",
                tokenizer.len(),
                arch.vocab_size
            )));
        }

        let mut tensors = SafeTensors::default();
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "safetensors"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Config(format!(
                "{}: no .safetensors weights (PyTorch .bin checkpoints must be converted first)",
                dir.display()
            )));
        }
        for f in files {
            tensors.tensors.extend(SafeTensors::read(&f)?.tensors);
        }
        let mut prefixes = vec![String::new(), "bert.".into(), "electra.".into()];
        if let Some(mt) = &arch.model_type {
            prefixes.push(format!("{mt}."));
        }
        for (internal, candidates, decay) in tensor_names(&arch) {
            let found = prefixes
                .iter()
                .flat_map(|p| candidates.iter().map(move |c| format!("{p}{c}")))
                .find_map(|name| tensors.take_matrix(&name));
            let m = found.ok_or_else(|| {
                Error::Config(format!("checkpoint lacks tensor {} (for {internal})", candidates[0]))
            })??;
            let want = expected_shape(&arch, &internal);
            if m.dim() != want {
                return Err(Error::Config(format!(
                    "tensor for {internal} has shape {:?}, expected {want:?}",
                    m.dim()
                )));
            }
            params.add(internal, m, decay);
        }
        Self::restore(arch, tokenizer, max_length, params)
    }

    /// Reattaches to parameters already present in `params`.
    pub fn restore(arch: BertArch, tokenizer: WordPiece, max_length: usize, params: &ParamStore) -> Result<Self> {
        arch.validate()?;
        let find = |name: String| {
            params
                .id(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))
        };
        let linear = |p: &str| -> Result<Linear> {
            Ok(Linear {
                weight: find(format!("{p}.weight"))?,
                bias: find(format!("{p}.bias"))?,
            })
        };
        let norm = |p: &str| -> Result<Norm> {
            Ok(Norm {
                gamma: find(format!("{p}.gamma"))?,
                beta: find(format!("{p}.beta"))?,
            })
        };
        let project = if arch.embedding_width() != arch.hidden_size {
            Some(linear("encoder.emb.project")?)
        } else {
            None
        };
        let layers = (0..arch.num_hidden_layers)
            .map(|i| {
                let p = format!("encoder.layer.{i}");
                Ok(Layer {
                    query: linear(&format!("{p}.query"))?,
                    key: linear(&format!("{p}.key"))?,
                    value: linear(&format!("{p}.value"))?,
                    attn_out: linear(&format!("{p}.attn_out"))?,
                    attn_norm: norm(&format!("{p}.attn_norm"))?,
                    ffn_in: linear(&format!("{p}.ffn_in"))?,
                    ffn_out: linear(&format!("{p}.ffn_out"))?,
                    ffn_norm: norm(&format!("{p}.ffn_norm"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TransformerEncoder {
            word: find("encoder.emb.word".into())?,
            position: find("encoder.emb.position".into())?,
            token_type: find("encoder.emb.token_type".into())?,
            emb_norm: norm("encoder.emb.norm")?,
            project,
            layers,
            arch,
            tokenizer,
            max_length,
        })
    }

    pub fn arch(&self) -> &BertArch {
        &self.arch
    }

    pub fn tokenizer(&self) -> &WordPiece {
        &self.tokenizer
    }

    /// `[CLS] pieces… [SEP]` truncated to `max_length`, then padded.
    pub fn tokenize_truncate(&self, text: &str) -> TokenSequence {
        let pieces = self.tokenizer.tokenize(text);
        let mut ids = Vec::with_capacity(self.max_length);
        ids.push(self.tokenizer.cls);
        if self.max_length >= 2 {
            let budget = self.max_length - 2;
            ids.extend(pieces.iter().take(budget));
            ids.push(self.tokenizer.sep);
        }
        ids.truncate(self.max_length);
        let length = ids.len();
        ids.resize(self.max_length, self.tokenizer.pad);
        TokenSequence { ids, length }
    }

    fn linear(&self, g: &mut Graph, x: Var, l: &Linear) -> Var {
        let w = g.param(l.weight);
        let b = g.param(l.bias);
        g.linear(x, w, b)
    }

    fn norm(&self, g: &mut Graph, x: Var, n: &Norm) -> Var {
        let gamma = g.param(n.gamma);
        let beta = g.param(n.beta);
        g.layer_norm(x, gamma, beta, self.arch.layer_norm_eps)
    }

    /// Encodes one sequence (only its real tokens; padding is never
    /// attended to) and returns its `[CLS]` row.
    fn forward_one(&self, g: &mut Graph, seq: &TokenSequence) -> Var {
        let ids: Vec<usize> = seq.content().iter().map(|&i| i as usize).collect();
        let len = ids.len();
        let positions: Vec<usize> = (0..len).collect();
        let word = g.param(self.word);
        let pos = g.param(self.position);
        let tt = g.param(self.token_type);
        let we = g.gather(word, &ids);
        let pe = g.gather(pos, &positions);
        let te = g.gather(tt, &vec![0; len]);
        let x = g.add(we, pe);
        let x = g.add(x, te);
        let mut x = self.norm(g, x, &self.emb_norm);
        if let Some(p) = &self.project {
            x = self.linear(g, x, p);
        }
        let heads = self.arch.num_attention_heads;
        let dh = self.arch.hidden_size / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        for layer in &self.layers {
            let q = self.linear(g, x, &layer.query);
            let k = self.linear(g, x, &layer.key);
            let v = self.linear(g, x, &layer.value);
            let mut ctx = Vec::with_capacity(heads);
            for h in 0..heads {
                let qh = g.slice_cols(q, h * dh, dh);
                let kh = g.slice_cols(k, h * dh, dh);
                let vh = g.slice_cols(v, h * dh, dh);
                let scores = g.matmul_t(qh, kh);
                let scores = g.scale(scores, scale);
                let probs = g.softmax_rows(scores);
                ctx.push(g.matmul(probs, vh));
            }
            let ctx = if heads == 1 { ctx[0] } else { g.concat_cols(&ctx) };
            let attn = self.linear(g, ctx, &layer.attn_out);
            let res = g.add(attn, x);
            x = self.norm(g, res, &layer.attn_norm);
            let hmid = self.linear(g, x, &layer.ffn_in);
            let hmid = g.gelu(hmid);
            let out = self.linear(g, hmid, &layer.ffn_out);
            let res = g.add(out, x);
            x = self.norm(g, res, &layer.ffn_norm);
        }
        g.slice_rows(x, 0, 1)
    }

    pub fn forward(&self, g: &mut Graph, seqs: &[TokenSequence]) -> Var {
        let rows: Vec<Var> = seqs.iter().map(|s| self.forward_one(g, s)).collect();
        if rows.is_empty() {
            return g.constant(Matrix::zeros((0, self.arch.hidden_size)));
        }
        g.concat_rows(&rows)
    }
}

fn read_lowercase(dir: &Path) -> Result<bool> {
    let path = dir.join("tokenizer_config.json");
    if !path.exists() {
        return Ok(false);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(v.get("do_lower_case").and_then(|b| b.as_bool()).unwrap_or(false))
}

/// Writes a randomly initialised BERT checkpoint in Hugging Face layout
/// (`bert.`-prefixed F32 safetensors, `config.json`, `vocab.txt`). Useful
/// for exercising the transformer path without downloading weights.
pub fn synthesize_checkpoint(dir: &Path, arch: &BertArch, words: &[&str], seed: u64) -> Result<()> {
    arch.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut vocab: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        .iter()
        .chain(words)
        .map(|s| s.to_string())
        .collect();
    vocab.dedup();
    if vocab.len() > arch.vocab_size {
        return Err(Error::Config("more words than vocab_size".into()));
    }
    while vocab.len() < arch.vocab_size {
        vocab.push(format!("[unused{}]", vocab.len()));
    }
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("vocab.txt", vocab.join("\n") + "\n")?;
    let mut cfg = serde_json::to_value(arch).unwrap();
    cfg["model_type"] = serde_json::Value::String(arch.model_type.clone().unwrap_or_else(|| "bert".into()));
    write("config.json", serde_json::to_string_pretty(&cfg).unwrap())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.2).unwrap();
    let mut tensors = BTreeMap::new();
    for (internal, hf, _) in tensor_names(arch) {
        let (r, c) = expected_shape(arch, &internal);
        let data: Vec<f32> = if internal.ends_with(".gamma") {
            vec![1.0; r * c]
        } else if internal.ends_with(".beta") {
            vec![0.0; r * c]
        } else {
            (0..r * c).map(|_| normal.sample(&mut rng) as f32).collect()
        };
        let shape = if r == 1 { vec![c] } else { vec![r, c] };
        tensors.insert(format!("bert.{}", hf[0]), (shape, data));
    }
    let p = dir.join("model.safetensors");
    std::fs::write(&p, safetensors::to_bytes_f32(&tensors)).map_err(|e| Error::io(&p, e))
}

/// A tiny architecture for tests and examples.
pub fn tiny_arch(vocab_size: usize) -> BertArch {
    BertArch {
        vocab_size,
        hidden_size: 8,
        num_hidden_layers: 2,
        num_attention_heads: 2,
        intermediate_size: 16,
        max_position_embeddings: 64,
        type_vocab_size: 2,
        layer_norm_eps: 1e-12,
        hidden_act: "gelu".into(),
        embedding_size: None,
        model_type: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path, embedding_size: Option<usize>) -> (TransformerEncoder, ParamStore) {
        let mut arch = tiny_arch(32);
        arch.embedding_size = embedding_size;
        synthesize_checkpoint(dir, &arch, &["ভাল", "##ো", "hello", "world", "a", "b"], 11).unwrap();
        let mut params = ParamStore::new();
        let enc = TransformerEncoder::load(dir, 12, 8, &mut params).unwrap();
        (enc, params)
    }

    #[test]
    fn truncation_and_padding() {
        let dir = tempfile::tempdir().unwrap();
        let (enc, _) = tiny(dir.path(), None);
        let long = vec!["hello"; 300].join(" ");
        let s = enc.tokenize_truncate(&long);
        assert_eq!(s.ids.len(), 12);
        assert_eq!(s.length, 12);
        assert_eq!(s.ids[0], enc.tokenizer().cls);
        assert_eq!(s.ids[11], enc.tokenizer().sep);
        let e = enc.tokenize_truncate("");
        assert_eq!(e.length, 2);
        assert_eq!(&e.ids[2..], &[enc.tokenizer().pad; 10]);
        let short = enc.tokenize_truncate("a b hello world ভালো");
        assert_eq!(short.length, 8);
    }

    #[test]
    fn rows_independent_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let (enc, params) = tiny(dir.path(), None);
        let texts = ["hello world", "a", "ভালো b a hello"];
        let seqs: Vec<_> = texts.iter().map(|t| enc.tokenize_truncate(t)).collect();
        let run = |s: &[TokenSequence]| {
            let mut g = Graph::new(&params);
            let v = enc.forward(&mut g, s);
            g.value(v).clone()
        };
        let all = run(&seqs);
        assert_eq!(all.dim(), (3, 8));
        assert_eq!(all, run(&seqs));
        let rev: Vec<_> = seqs.iter().rev().cloned().collect();
        let r = run(&rev);
        for i in 0..3 {
            assert_eq!(all.row(i), r.row(2 - i));
        }
    }

    #[test]
    fn gradient_through_encoder() {
        let dir = tempfile::tempdir().unwrap();
        let (enc, params) = tiny(dir.path(), Some(6));
        let seqs: Vec<_> = ["hello a", "world ভালো"]
            .iter()
            .map(|t| enc.tokenize_truncate(t))
            .collect();
        let loss = |p: &ParamStore| {
            let mut g = Graph::new(p);
            let v = enc.forward(&mut g, &seqs);
            let l = g.cross_entropy(v, &[1, 5]);
            (g.scalar(l), g.backward(l))
        };
        let (_, grads) = loss(&params);
        for name in [
            "encoder.layer.0.query.weight",
            "encoder.layer.1.ffn_in.bias",
            "encoder.emb.norm.gamma",
            "encoder.emb.project.weight",
            "encoder.layer.0.attn_norm.beta",
            "encoder.emb.word",
        ] {
            let id = params.id(name).unwrap();
            let (r, c) = params.get(id).dim();
            let analytic = grads.get(id).unwrap();
            for (i, j) in [(0, 0), (r - 1, c - 1), (r / 2, c / 3)] {
                let eps = 1e-6;
                let mut plus = params.clone();
                plus.get_mut(id)[(i, j)] += eps;
                let mut minus = params.clone();
                minus.get_mut(id)[(i, j)] -= eps;
                let num = (loss(&plus).0 - loss(&minus).0) / (2.0 * eps);
                let a = analytic[(i, j)];
                assert!(
                    (a - num).abs() <= 1e-5 * a.abs().max(num.abs()).max(1e-2),
                    "{name}[{i},{j}] analytic {a} numeric {num}"
                );
            }
        }
    }

    #[test]
    fn hidden_dim_mismatch_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        synthesize_checkpoint(dir.path(), &tiny_arch(16), &[], 0).unwrap();
        let mut params = ParamStore::new();
        let e = TransformerEncoder::load(dir.path(), 12, 16, &mut params).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn missing_weights_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        synthesize_checkpoint(dir.path(), &tiny_arch(16), &[], 0).unwrap();
        std::fs::remove_file(dir.path().join("model.safetensors")).unwrap();
        let mut params = ParamStore::new();
        let e = TransformerEncoder::load(dir.path(), 12, 8, &mut params).unwrap_err();
        assert!(e.to_string().contains("safetensors"), "{e}");
    }
}
