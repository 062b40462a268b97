//! Weight-free encoder for tests and smoke runs: hashed character n-gram
//! counts, L2-normalised.

use std::hash::Hasher;

use fnv::FnvHasher;

use super::TokenSequence;
use crate::autograd::Matrix;

pub const MAX_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyEncoder {
    pub hidden_dim: usize,
    pub max_length: usize,
    pub hash_seed: u64,
}

impl ToyEncoder {
    fn hash(&self, bytes: &[u8]) -> u64 {
        let mut h = FnvHasher::default();
        h.write(&self.hash_seed.to_le_bytes());
        h.write(bytes);
        h.finish()
    }

    /// Byte length of the prefix holding the first `max_length`
    /// whitespace-separated tokens (the whole text when it is shorter).
    fn truncated<'a>(&self, text: &'a str) -> &'a str {
        let mut count = 0;
        let mut in_token = false;
        for (i, c) in text.char_indices() {
            if c.is_whitespace() {
                if in_token {
                    in_token = false;
                    if count == self.max_length {
                        return &text[..i];
                    }
                }
            } else if !in_token {
                in_token = true;
                count += 1;
            }
        }
        text
    }

    /// Token ids are hashes of whitespace tokens, shifted so 0 stays the
    /// padding id.
    pub fn tokenize_truncate(&self, text: &str) -> TokenSequence {
        let mut ids: Vec<u32> = text
            .split_whitespace()
            .take(self.max_length)
            .map(|w| (self.hash(w.as_bytes()) % (u32::MAX as u64 - 1)) as u32 + 1)
            .collect();
        let length = ids.len();
        ids.resize(self.max_length, 0);
        TokenSequence { ids, length }
    }

    pub fn encode_one(&self, text: &str) -> Vec<f64> {
        let text = self.truncated(text);
        let chars: Vec<char> = text.chars().collect();
        let mut v = vec![0.0; self.hidden_dim];
        let mut buf = String::new();
        for n in 1..=MAX_NGRAM {
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let bucket = (self.hash(buf.as_bytes()) % self.hidden_dim as u64) as usize;
                v[bucket] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    pub fn encode(&self, texts: &[&str]) -> Matrix {
        let mut out = Matrix::zeros((texts.len(), self.hidden_dim));
        for (mut row, t) in out.rows_mut().into_iter().zip(texts) {
            for (dst, src) in row.iter_mut().zip(self.encode_one(t)) {
                *dst = src;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(dim: usize) -> ToyEncoder {
        ToyEncoder {
            hidden_dim: dim,
            max_length: 128,
            hash_seed: 0,
        }
    }

    #[test]
    fn unit_norm_or_zero() {
        let e = toy(16);
        let v = e.encode_one("hello world");
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(e.encode_one("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncation_keeps_prefix_tokens() {
        let e = ToyEncoder {
            max_length: 2,
            ..toy(32)
        };
        assert_eq!(e.truncated("a  b c d"), "a  b");
        assert_eq!(e.truncated("a b"), "a b");
        assert_eq!(e.encode_one("x y z"), e.encode_one("x y"));
    }

    #[test]
    fn seed_changes_buckets() {
        let a = toy(64);
        let b = ToyEncoder {
            hash_seed: 7,
            ..toy(64)
        };
        assert_ne!(a.encode_one("some text"), b.encode_one("some text"));
    }

    /// Reference FNV-1a 64, written out from its constants.
    fn fnv1a(bytes: &[u8]) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

    #[test]
    fn matches_reference_fnv_bucketing() {
        let e = toy(8);
        let mut expected = [0.0f64; 8];
        for gram in ["a", "b", "ab"] {
            let mut key = 0u64.to_le_bytes().to_vec();
            key.extend_from_slice(gram.as_bytes());
            expected[(fnv1a(&key) % 8) as usize] += 1.0;
        }
        let norm = expected.iter().map(|x| x * x).sum::<f64>().sqrt();
        let got = e.encode_one("ab");
        for (g, x) in got.iter().zip(expected) {
            assert!((g - x / norm).abs() < 1e-15);
        }
        let r = 1.0 / 3f64.sqrt();
        assert_eq!(got, vec![0.0, 0.0, r, 0.0, r, r, 0.0, 0.0]);
    }
}
