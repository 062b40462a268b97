//! Three members, three different answers: how the tie-break rules decide.
//!
//! ```text
//! cargo run --example hard_vote_ties
//! ```

use hatefuse::autograd::Matrix;
use hatefuse::data::TaskId;
use hatefuse::ensemble::{hard_vote, PredictionMatrix, TieBreak};

fn main() {
    let labels: Vec<String> = ["None", "Individual", "Organization", "Community", "Society"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = [
        [0.10, 0.15, 0.20, 0.25, 0.30],
        [0.05, 0.50, 0.15, 0.15, 0.15],
        [0.10, 0.10, 0.45, 0.05, 0.30],
    ];
    let members: Vec<PredictionMatrix> = rows
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let probs = Matrix::from_shape_fn((1, 5), |(_, j)| r[j]);
            PredictionMatrix::new(format!("m{m}"), TaskId::Target, labels.clone(), probs, vec!["x".into()]).unwrap()
        })
        .collect();

    // Votes: Society, Individual, Organization. Summed probabilities over
    // the tied labels: Individual 0.75, Organization 0.80, Society 0.75.
    for tie in [TieBreak::SoftFallback, TieBreak::LowestIndex] {
        println!("{tie:?}: {}", hard_vote(&members, tie).unwrap()[0]);
    }
}
