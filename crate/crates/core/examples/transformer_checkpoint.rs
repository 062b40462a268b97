//! Fine-tunes a BERT-style encoder loaded from a Hugging Face checkpoint
//! directory. A tiny random checkpoint is written first so the example runs
//! offline; point `backbone` at a real MuRIL or BanglaBERT snapshot (or set
//! `HATEFUSE_CACHE_DIR`) to use pretrained weights.
//!
//! ```text
//! cargo run --release --example transformer_checkpoint
//! ```

use hatefuse::data::TaskId;
use hatefuse::encoder::transformer::{synthesize_checkpoint, tiny_arch};
use hatefuse::encoder::{BackboneResolver, EncoderConfig};
use hatefuse::model::{predict_proba, train, ModelConfig, TrainingConfig};
use hatefuse::synthetic::{separable_split, KEYWORDS};

fn main() -> hatefuse::Result<()> {
    let dir = std::env::temp_dir().join("hatefuse-tiny-bert");
    let words: Vec<&str> = KEYWORDS.type_.to_vec();
    synthesize_checkpoint(&dir, &tiny_arch(64), &words, 7)?;

    let backbone = dir.display().to_string();
    let encoder = EncoderConfig::transformer(backbone, 8).with_max_length(16);
    let training = TrainingConfig {
        learning_rate: 5e-3,
        batch_size: 8,
        epochs: 4,
        ..TrainingConfig::default()
    };
    let config = ModelConfig::single("tiny-bert", encoder, TaskId::Type, training);
    let split = separable_split(48, 5);
    let (model, log) = train(&split, &config, &BackboneResolver::from_env())?;
    println!("{} parameters", model.params().num_scalars());
    for (epoch, loss) in log.epoch_means().iter().enumerate() {
        println!("epoch {}  loss {loss:.4}", epoch + 1);
    }
    let probs = &predict_proba(&model, &split)?[0];
    println!("first row: {:.3}", probs.probs.row(0));
    Ok(())
}
