//! Label counts for a split with the published train distribution, plus
//! the digit-stripping preprocessor.
//!
//! ```text
//! cargo run --example label_distribution
//! ```

use hatefuse::data::{label_distribution, preprocess, SchemaSet, SplitName, TaskId};
use hatefuse::synthetic::marginal_split;

fn main() {
    println!("{:?}", preprocess("২০২৪ সালের নির্বাচন ১০০% সুষ্ঠু"));

    let schemas = SchemaSet::standard();
    let train = marginal_split(SplitName::Train, 0);
    println!("\n{} samples in {}", train.len(), train.name);
    for task in TaskId::ALL {
        let dist = label_distribution(&train, task, schemas.get(task)).expect("every sample is labelled");
        println!("\n{task}");
        for label in schemas.get(task).labels() {
            let n = dist.get(label).unwrap_or(0);
            println!("  {label:<16}{n:>7}  {:5.2}%", 100.0 * n as f64 / dist.total() as f64);
        }
    }
}
