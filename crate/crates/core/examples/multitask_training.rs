//! Trains one shared encoder with type, severity and target heads on a
//! small separable corpus, then scores it.
//!
//! ```text
//! cargo run --release --example multitask_training
//! ```

use std::collections::BTreeMap;

use hatefuse::data::{DatasetSplit, SchemaSet, SplitName};
use hatefuse::encoder::{BackboneResolver, EncoderConfig};
use hatefuse::ensemble::argmax_labels;
use hatefuse::evaluation::evaluate;
use hatefuse::model::{predict_proba, train, LossWeights, ModelConfig, TrainingConfig};
use hatefuse::synthetic::separable_split;

fn main() -> hatefuse::Result<()> {
    let schemas = SchemaSet::standard();
    let train_split = separable_split(300, 1);
    let test = DatasetSplit::new(SplitName::Test, separable_split(100, 2).samples, &schemas)?;

    let training = TrainingConfig {
        learning_rate: 0.05,
        epochs: 10,
        ..TrainingConfig::default()
    };
    let config = ModelConfig::multitask("toy-mtl", EncoderConfig::toy(256), LossWeights::default(), training);
    let (model, log) = train(&train_split, &config, &BackboneResolver::default())?;
    for (epoch, loss) in log.epoch_means().iter().enumerate() {
        println!("epoch {:>2}  loss {loss:.4}", epoch + 1);
    }

    let preds: BTreeMap<_, _> = predict_proba(&model, &test)?
        .into_iter()
        .map(|m| (m.task, argmax_labels(&m)))
        .collect();
    let report = evaluate(&preds, &test, &schemas, None)?;
    for (task, f1) in &report.per_task_micro_f1 {
        println!("{task:<9} micro-F1 {f1:.3}");
    }
    if let Some(w) = report.weighted_micro_f1 {
        println!("weighted  micro-F1 {:.3}", w.value);
    }
    Ok(())
}
