//! BiLSTM / BiGRU over word embeddings. The pooled vector is the final
//! hidden state of the forward pass concatenated with the final hidden
//! state of the backward pass.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::config::RecurrentCell;
use super::text::{split_words, Vocab};
use super::TokenSequence;
use crate::autograd::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

/// Gate weights of one direction, in PyTorch layout: LSTM gates are stacked
/// as (input, forget, cell, output), GRU gates as (reset, update, new).
#[derive(Debug, Clone)]
struct DirectionParams {
    w_ih: ParamId,
    w_hh: ParamId,
    b_ih: ParamId,
    b_hh: ParamId,
}

#[derive(Debug, Clone)]
pub struct RecurrentEncoder {
    cell: RecurrentCell,
    vocab: Vocab,
    hidden: usize,
    max_length: usize,
    embedding: ParamId,
    fwd: DirectionParams,
    bwd: DirectionParams,
}

fn gates(cell: RecurrentCell) -> usize {
    match cell {
        RecurrentCell::Bilstm => 4,
        RecurrentCell::Bigru => 3,
    }
}

const PREFIX: &str = "encoder";

impl RecurrentEncoder {
    /// Fresh encoder. `embedding_rows` fills the embedding table before
    /// training (pretrained vectors); rows it leaves untouched keep their
    /// random initialisation.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cell: RecurrentCell,
        vocab: Vocab,
        hidden_dim: usize,
        embedding_dim: usize,
        max_length: usize,
        rng: &mut ChaCha8Rng,
        params: &mut ParamStore,
        embedding_rows: impl FnOnce(&Vocab, &mut Matrix) -> Result<()>,
    ) -> Result<Self> {
        if !hidden_dim.is_multiple_of(2) {
            return Err(Error::Config("recurrent hidden_dim must be even".into()));
        }
        let hidden = hidden_dim / 2;
        let normal = Normal::new(0.0, 0.1).unwrap();
        let mut table = Matrix::from_shape_fn((vocab.len(), embedding_dim), |_| normal.sample(rng));
        table.row_mut(Vocab::PAD).fill(0.0);
        embedding_rows(&vocab, &mut table)?;
        let embedding = params.add(format!("{PREFIX}.embedding"), table, true);

        let k = 1.0 / (hidden as f64).sqrt();
        let uniform = Uniform::new_inclusive(-k, k).unwrap();
        let g = gates(cell);
        let mut direction = |name: &str, rng: &mut ChaCha8Rng| {
            let mut mk = |suffix: &str, r: usize, c: usize, decay: bool| {
                let m = Matrix::from_shape_fn((r, c), |_| uniform.sample(rng));
                params.add(format!("{PREFIX}.{name}.{suffix}"), m, decay)
            };
            DirectionParams {
                w_ih: mk("w_ih", g * hidden, embedding_dim, true),
                w_hh: mk("w_hh", g * hidden, hidden, true),
                b_ih: mk("b_ih", 1, g * hidden, false),
                b_hh: mk("b_hh", 1, g * hidden, false),
            }
        };
        let fwd = direction("fwd", rng);
        let bwd = direction("bwd", rng);
        Ok(RecurrentEncoder {
            cell,
            vocab,
            hidden,
            max_length,
            embedding,
            fwd,
            bwd,
        })
    }

    /// Reattaches to parameters restored from a checkpoint.
    pub fn restore(
        cell: RecurrentCell,
        vocab: Vocab,
        hidden_dim: usize,
        max_length: usize,
        params: &ParamStore,
    ) -> Result<Self> {
        let find = |name: String| {
            params
                .id(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name}")))
        };
        let direction = |name: &str| -> Result<DirectionParams> {
            Ok(DirectionParams {
                w_ih: find(format!("{PREFIX}.{name}.w_ih"))?,
                w_hh: find(format!("{PREFIX}.{name}.w_hh"))?,
                b_ih: find(format!("{PREFIX}.{name}.b_ih"))?,
                b_hh: find(format!("{PREFIX}.{name}.b_hh"))?,
            })
        };
        let embedding = find(format!("{PREFIX}.embedding"))?;
        if params.get(embedding).nrows() != vocab.len() {
            return Err(Error::Config("embedding table does not match vocabulary".into()));
        }
        Ok(RecurrentEncoder {
            cell,
            vocab,
            hidden: hidden_dim / 2,
            max_length,
            embedding,
            fwd: direction("fwd")?,
            bwd: direction("bwd")?,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn tokenize_truncate(&self, text: &str) -> TokenSequence {
        let mut ids: Vec<u32> = split_words(text)
            .into_iter()
            .take(self.max_length)
            .map(|w| self.vocab.id(w) as u32)
            .collect();
        let length = ids.len();
        ids.resize(self.max_length, Vocab::PAD as u32);
        TokenSequence { ids, length }
    }

    /// Runs one direction over sequences sorted by decreasing length and
    /// returns the final hidden states (B × hidden).
    fn run(&self, g: &mut Graph, dir: &DirectionParams, seqs: &[Vec<usize>]) -> Var {
        let b = seqs.len();
        let h_dim = self.hidden;
        let emb = g.param(self.embedding);
        let w_ih = g.param(dir.w_ih);
        let w_hh = g.param(dir.w_hh);
        let b_ih = g.param(dir.b_ih);
        let b_hh = g.param(dir.b_hh);
        let mut h = g.constant(Matrix::zeros((b, h_dim)));
        let mut c = g.constant(Matrix::zeros((b, h_dim)));
        let steps = seqs.first().map_or(0, Vec::len);
        for t in 0..steps {
            let active = seqs.iter().take_while(|s| s.len() > t).count();
            let ids: Vec<usize> = seqs[..active].iter().map(|s| s[t]).collect();
            let x = g.gather(emb, &ids);
            let (h_act, c_act) = if active == b {
                (h, c)
            } else {
                (g.slice_rows(h, 0, active), g.slice_rows(c, 0, active))
            };
            let gi = g.linear(x, w_ih, b_ih);
            let gh = g.linear(h_act, w_hh, b_hh);
            let (h_new, c_new) = match self.cell {
                RecurrentCell::Bilstm => {
                    let z = g.add(gi, gh);
                    let i = g.slice_cols(z, 0, h_dim);
                    let i = g.sigmoid(i);
                    let f = g.slice_cols(z, h_dim, h_dim);
                    let f = g.sigmoid(f);
                    let cand = g.slice_cols(z, 2 * h_dim, h_dim);
                    let cand = g.tanh(cand);
                    let o = g.slice_cols(z, 3 * h_dim, h_dim);
                    let o = g.sigmoid(o);
                    let keep = g.mul(f, c_act);
                    let write = g.mul(i, cand);
                    let c_new = g.add(keep, write);
                    let tc = g.tanh(c_new);
                    (g.mul(o, tc), c_new)
                }
                RecurrentCell::Bigru => {
                    let gi_rz = g.slice_cols(gi, 0, 2 * h_dim);
                    let gh_rz = g.slice_cols(gh, 0, 2 * h_dim);
                    let rz = g.add(gi_rz, gh_rz);
                    let rz = g.sigmoid(rz);
                    let r = g.slice_cols(rz, 0, h_dim);
                    let z = g.slice_cols(rz, h_dim, h_dim);
                    let gi_n = g.slice_cols(gi, 2 * h_dim, h_dim);
                    let gh_n = g.slice_cols(gh, 2 * h_dim, h_dim);
                    let rn = g.mul(r, gh_n);
                    let n = g.add(gi_n, rn);
                    let n = g.tanh(n);
                    // h' = n + z ⊙ (h − n)
                    let neg_n = g.scale(n, -1.0);
                    let diff = g.add(h_act, neg_n);
                    let zd = g.mul(z, diff);
                    (g.add(n, zd), c_act)
                }
            };
            if active == b {
                h = h_new;
                c = c_new;
            } else {
                let h_rest = g.slice_rows(h, active, b - active);
                let c_rest = g.slice_rows(c, active, b - active);
                h = g.concat_rows(&[h_new, h_rest]);
                c = g.concat_rows(&[c_new, c_rest]);
            }
        }
        h
    }

    pub fn forward(&self, g: &mut Graph, seqs: &[TokenSequence]) -> Var {
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.sort_by(|&a, &b| seqs[b].length.cmp(&seqs[a].length).then(a.cmp(&b)));
        let forward_ids: Vec<Vec<usize>> = order
            .iter()
            .map(|&i| seqs[i].content().iter().map(|&t| t as usize).collect())
            .collect();
        let backward_ids: Vec<Vec<usize>> = forward_ids.iter().map(|s| s.iter().rev().copied().collect()).collect();
        let hf = self.run(g, &self.fwd, &forward_ids);
        let hb = self.run(g, &self.bwd, &backward_ids);
        let both = g.concat_cols(&[hf, hb]);
        let mut inverse = vec![0; order.len()];
        for (sorted_pos, &orig) in order.iter().enumerate() {
            inverse[orig] = sorted_pos;
        }
        g.gather(both, &inverse)
    }
}
