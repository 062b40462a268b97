use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::text::Vocab;
use crate::autograd::Matrix;
use crate::error::{Error, Result};

/// Copies vectors for in-vocabulary words from a plain-text word-vector
/// file (`word v1 v2 ...` per line, GloVe or fastText `.vec`) into the
/// matching rows of `table`. Returns how many vocabulary words were found.
pub fn load_word_vectors(path: &Path, vocab: &Vocab, table: &mut Matrix) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dim = table.ncols();
    let mut found = 0;
    let source = path.display().to_string();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::Parse {
            path: source.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        // fastText files open with "<count> <dim>".
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            let declared: usize = fields[1].parse().unwrap();
            if declared != dim {
                return Err(Error::Config(format!(
                    "{source}: vectors have {declared} dimensions, embedding_dim is {dim}"
                )));
            }
            continue;
        }
        if fields.len() < dim + 1 {
            return Err(Error::Parse {
                path: source.clone(),
                line: lineno,
                message: format!("expected a word and {dim} values, found {} fields", fields.len()),
            });
        }
        let split = fields.len() - dim;
        let word = fields[..split].join(" ");
        let Some(id) = vocab.get(&word) else {
            continue;
        };
        if id == Vocab::PAD || id == Vocab::UNK {
            continue;
        }
        let mut row = table.row_mut(id);
        for (dst, f) in row.iter_mut().zip(&fields[split..]) {
            *dst = f.parse::<f64>().map_err(|_| Error::Parse {
                path: source.clone(),
                line: lineno,
                message: format!("invalid number {f:?}"),
            })?;
        }
        found += 1;
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn fasttext_header_and_lookup() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "3 2\nhello 0.5 -1\nworld 2 3\nother 9 9").unwrap();
        let vocab = Vocab::build(["hello world"]);
        let mut table = Matrix::zeros((vocab.len(), 2));
        let found = load_word_vectors(f.path(), &vocab, &mut table).unwrap();
        assert_eq!(found, 2);
        assert_eq!(table.row(vocab.id("hello")).to_vec(), vec![0.5, -1.0]);
        assert_eq!(table.row(Vocab::PAD).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "hello 0.5").unwrap();
        let vocab = Vocab::build(["hello"]);
        let mut table = Matrix::zeros((vocab.len(), 2));
        assert!(load_word_vectors(f.path(), &vocab, &mut table).is_err());
    }
}
