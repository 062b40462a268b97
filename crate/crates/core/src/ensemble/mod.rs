//! Fusion of per-model probability matrices.
//!
//! Members must be aligned: same task, same label order, same sample order.
//! Nothing is reordered or joined behind the caller's back; a mismatch is an
//! [`Error::Alignment`](crate::Error::Alignment) naming the first offending
//! sample id.

mod interchange;
mod matrix;
mod spec;
mod vote;

pub use interchange::{FusionRecord, PredictionFile, PREDICTIONS_FORMAT};
pub use matrix::{argmax_labels, check_alignment, PredictionMatrix, SIMPLEX_TOLERANCE};
pub use spec::{EnsembleSpec, FusionMethod, ENSEMBLE_PRESETS};
pub use vote::{
    hard_vote, hard_vote_indices, hard_vote_matrix, soft_vote, validate_weights, weighted_vote, TieBreak,
    WEIGHT_SUM_TOLERANCE,
};
