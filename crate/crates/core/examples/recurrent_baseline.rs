//! BiLSTM and BiGRU single-task baselines over word vectors read from a
//! GloVe-style text file.
//!
//! ```text
//! cargo run --release --example recurrent_baseline
//! ```

use std::io::Write;

use hatefuse::data::TaskId;
use hatefuse::encoder::{BackboneResolver, EmbeddingSource, EncoderConfig, EncoderFamily, RecurrentCell};
use hatefuse::model::{train, ModelConfig, TrainingConfig};
use hatefuse::synthetic::{separable_split, KEYWORDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 16;

fn main() -> hatefuse::Result<()> {
    // A stand-in vector file covering the severity keywords.
    let dir = std::env::temp_dir().join("hatefuse-recurrent-example");
    std::fs::create_dir_all(&dir).unwrap();
    let vectors = dir.join("vectors.txt");
    let mut f = std::fs::File::create(&vectors).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for word in KEYWORDS.severity {
        let v: Vec<String> = (0..DIM)
            .map(|_| format!("{:.4}", rng.random_range(-1.0..1.0)))
            .collect();
        writeln!(f, "{word} {}", v.join(" ")).unwrap();
    }
    drop(f);

    let split = separable_split(120, 3);
    let training = TrainingConfig {
        learning_rate: 0.01,
        batch_size: 16,
        epochs: 8,
        ..TrainingConfig::default()
    };
    for cell in [RecurrentCell::Bilstm, RecurrentCell::Bigru] {
        let mut encoder = EncoderConfig::recurrent(cell, 24, DIM);
        encoder.family = EncoderFamily::Recurrent {
            cell,
            embedding_source: EmbeddingSource::Glove,
            embedding_dim: DIM,
            embedding_path: Some(vectors.display().to_string()),
        };
        let config = ModelConfig::single(encoder.short_name(), encoder, TaskId::Severity, training.clone());
        let (_, log) = train(&split, &config, &BackboneResolver::default())?;
        let means = log.epoch_means();
        println!(
            "{:<14} loss {:.4} -> {:.4} in {:.2} s",
            config.model_id,
            means[0],
            means[means.len() - 1],
            log.wall_clock_secs
        );
    }
    Ok(())
}
