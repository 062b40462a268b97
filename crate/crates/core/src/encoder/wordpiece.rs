use std::collections::HashMap;
use std::path::Path;

use super::text::split_words;
use crate::error::{Error, Result};

const MAX_CHARS_PER_WORD: usize = 100;

/// Greedy longest-match-first WordPiece over a BERT `vocab.txt`.
#[derive(Debug, Clone)]
pub struct WordPiece {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    lowercase: bool,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub pad: u32,
}

impl WordPiece {
    pub fn new(tokens: Vec<String>, lowercase: bool) -> Result<Self> {
        let index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let special = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocabulary lacks {name}")))
        };
        Ok(WordPiece {
            unk: special("[UNK]")?,
            cls: special("[CLS]")?,
            sep: special("[SEP]")?,
            pad: special("[PAD]")?,
            tokens,
            index,
            lowercase,
        })
    }

    pub fn from_file(path: &Path, lowercase: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        WordPiece::new(tokens, lowercase)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Subword ids of `text`, without special tokens.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let lowered;
        let text = if self.lowercase {
            lowered = text.to_lowercase();
            lowered.as_str()
        } else {
            text
        };
        let mut out = Vec::new();
        let mut piece = String::new();
        for word in split_words(text) {
            let chars: Vec<char> = word.chars().collect();
            if chars.len() > MAX_CHARS_PER_WORD {
                out.push(self.unk);
                continue;
            }
            let mut pieces = Vec::new();
            let mut start = 0;
            let mut ok = true;
            while start < chars.len() {
                let mut end = chars.len();
                let mut found = None;
                while start < end {
                    piece.clear();
                    if start > 0 {
                        piece.push_str("##");
                    }
                    piece.extend(&chars[start..end]);
                    if let Some(&id) = self.index.get(piece.as_str()) {
                        found = Some(id);
                        break;
                    }
                    end -= 1;
                }
                match found {
                    Some(id) => {
                        pieces.push(id);
                        start = end;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                out.extend(pieces);
            } else {
                out.push(self.unk);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp() -> WordPiece {
        let vocab = [
            "[PAD]",
            "[UNK]",
            "[CLS]",
            "[SEP]",
            "un",
            "##aff",
            "##able",
            "hello",
            ",",
            "ভাল",
            "##ো",
        ];
        WordPiece::new(vocab.iter().map(|s| s.to_string()).collect(), true).unwrap()
    }

    #[test]
    fn greedy_longest_match() {
        let w = wp();
        assert_eq!(w.tokenize("unaffable, Hello"), vec![4, 5, 6, 8, 7]);
        assert_eq!(w.tokenize("ভালো"), vec![9, 10]);
        assert_eq!(w.tokenize("xyz"), vec![w.unk]);
    }

    #[test]
    fn needs_special_tokens() {
        assert!(WordPiece::new(vec!["a".into()], false).is_err());
    }
}
