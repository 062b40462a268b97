use serde::{Deserialize, Serialize};

use super::matrix::{argmax, check_alignment, PredictionMatrix};
use crate::autograd::Matrix;
use crate::error::{Error, Result};

/// Weights must sum to one within this tolerance.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// How [`hard_vote`] resolves a tie between the most-voted labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// The tied label with the highest mean probability (lowest index if
    /// that ties as well).
    #[default]
    SoftFallback,
    /// The tied label that comes first in the label order.
    LowestIndex,
}

impl std::str::FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "soft_fallback" => Ok(TieBreak::SoftFallback),
            "lowest_index" => Ok(TieBreak::LowestIndex),
            _ => Err(Error::Config(format!(
                "unknown tie break {s:?}; expected soft_fallback or lowest_index"
            ))),
        }
    }
}

fn member_list(matrices: &[PredictionMatrix]) -> String {
    matrices
        .iter()
        .map(|m| m.model_id.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

fn combine(matrices: &[PredictionMatrix], weights: &[f64], model_id: String) -> PredictionMatrix {
    let first = &matrices[0];
    let mut probs = Matrix::zeros(first.probs.dim());
    for (m, &w) in matrices.iter().zip(weights) {
        probs.scaled_add(w, &m.probs);
    }
    PredictionMatrix {
        model_id,
        task: first.task,
        labels: first.labels.clone(),
        probs,
        sample_ids: first.sample_ids.clone(),
    }
}

/// Unweighted mean of the members' probabilities.
pub fn soft_vote(matrices: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    check_alignment(matrices)?;
    let n = matrices.len();
    let mut out = combine(matrices, &vec![1.0; n], format!("soft({})", member_list(matrices)));
    out.probs /= n as f64;
    Ok(out)
}

/// Convex combination `Σ wᵢ·Pᵢ`; weights follow member order.
pub fn weighted_vote(matrices: &[PredictionMatrix], weights: &[f64]) -> Result<PredictionMatrix> {
    check_alignment(matrices)?;
    validate_weights(weights, matrices.len())?;
    Ok(combine(
        matrices,
        weights,
        format!("weighted({})", member_list(matrices)),
    ))
}

pub fn validate_weights(weights: &[f64], members: usize) -> Result<()> {
    if weights.len() != members {
        return Err(Error::Validation(format!(
            "{} weights for {} members",
            weights.len(),
            members
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Validation(format!(
            "weight {w} is not a finite nonnegative number"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(Error::Validation(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Per-sample index of the label with the most member argmax votes.
pub fn hard_vote_indices(matrices: &[PredictionMatrix], tie_break: TieBreak) -> Result<Vec<usize>> {
    check_alignment(matrices)?;
    let votes: Vec<Vec<usize>> = matrices.iter().map(|m| m.argmax_indices()).collect();
    let c = matrices[0].num_classes();
    let n = matrices[0].len();
    let mut out = Vec::with_capacity(n);
    let mut tally = vec![0usize; c];
    for i in 0..n {
        tally.iter_mut().for_each(|t| *t = 0);
        for v in &votes {
            tally[v[i]] += 1;
        }
        let top = *tally.iter().max().expect("at least one class");
        let tied: Vec<usize> = (0..c).filter(|&j| tally[j] == top).collect();
        let winner = match (tied.len(), tie_break) {
            (1, _) | (_, TieBreak::LowestIndex) => tied[0],
            (_, TieBreak::SoftFallback) => {
                let mean = |j: usize| matrices.iter().map(|m| m.probs[(i, j)]).sum::<f64>();
                tied[argmax(tied.iter().map(|&j| mean(j)))]
            }
        };
        out.push(winner);
    }
    Ok(out)
}

/// Majority label over the members' argmax labels.
pub fn hard_vote(matrices: &[PredictionMatrix], tie_break: TieBreak) -> Result<Vec<String>> {
    let labels = &matrices.first().map(|m| m.labels.clone()).unwrap_or_default();
    Ok(hard_vote_indices(matrices, tie_break)?
        .into_iter()
        .map(|j| labels[j].clone())
        .collect())
}

/// Hard-vote result as a matrix of one-hot rows, so it can travel through
/// the same interchange format as probabilistic predictions.
pub fn hard_vote_matrix(matrices: &[PredictionMatrix], tie_break: TieBreak) -> Result<PredictionMatrix> {
    let winners = hard_vote_indices(matrices, tie_break)?;
    let first = &matrices[0];
    let mut probs = Matrix::zeros(first.probs.dim());
    for (i, &j) in winners.iter().enumerate() {
        probs[(i, j)] = 1.0;
    }
    Ok(PredictionMatrix {
        model_id: format!("hard({})", member_list(matrices)),
        task: first.task,
        labels: first.labels.clone(),
        probs,
        sample_ids: first.sample_ids.clone(),
    })
}
