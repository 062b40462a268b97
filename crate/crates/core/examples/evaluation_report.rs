//! Scores noisy predictions: micro-F1, the task-weighted score, confusion
//! matrices and an error report with minority-class recall.
//!
//! ```text
//! cargo run --example evaluation_report
//! ```

use std::collections::BTreeMap;

use hatefuse::data::{SchemaSet, SplitName, TaskId};
use hatefuse::evaluation::{error_report, evaluate, majority_baseline, micro_f1};
use hatefuse::synthetic::marginal_split;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hatefuse::Result<()> {
    let schemas = SchemaSet::standard();
    let train = marginal_split(SplitName::Train, 1);
    let dev = marginal_split(SplitName::Dev, 2);

    // Gold labels with 30% replaced by a random label.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut preds = BTreeMap::new();
    for task in TaskId::ALL {
        let labels = schemas.get(task).labels();
        let noisy = dev
            .gold_labels(task)?
            .into_iter()
            .map(|g| {
                if rng.random_bool(0.3) {
                    labels[rng.random_range(0..labels.len())].clone()
                } else {
                    g
                }
            })
            .collect();
        preds.insert(task, noisy);
    }

    let weights: BTreeMap<TaskId, f64> = [(TaskId::Type, 0.5), (TaskId::Severity, 0.25), (TaskId::Target, 0.25)].into();
    let report = evaluate(&preds, &dev, &schemas, Some(&weights))?;
    for (task, f1) in &report.per_task_micro_f1 {
        println!("{task:<9} {f1:.4}");
    }
    println!("weighted  {:.4}", report.weighted_micro_f1.as_ref().unwrap().value);
    print!("\n{}", report.confusion[&TaskId::Severity].to_csv());

    let majority = majority_baseline(&train, TaskId::Type, schemas.get(TaskId::Type), dev.len())?;
    let f1 = micro_f1(&majority, &dev.gold_labels(TaskId::Type)?, schemas.get(TaskId::Type))?;
    println!("\nmajority baseline ({}) on type: {f1:.4}", majority[0]);

    let errors = error_report(&dev, &preds, &schemas, 3, 0.75)?;
    println!("\n{}", errors.to_markdown());
    Ok(())
}
