//! Soft, weighted and hard voting over three members' probability matrices.
//!
//! ```text
//! cargo run --example voting
//! ```

use hatefuse::autograd::Matrix;
use hatefuse::data::TaskId;
use hatefuse::ensemble::{argmax_labels, EnsembleSpec, PredictionMatrix, TieBreak};

fn member(id: &str, rows: [[f64; 3]; 2]) -> PredictionMatrix {
    let probs = Matrix::from_shape_fn((2, 3), |(i, j)| rows[i][j]);
    PredictionMatrix::new(
        id,
        TaskId::Severity,
        vec!["Little to None".into(), "Mild".into(), "Severe".into()],
        probs,
        vec!["post-1".into(), "post-2".into()],
    )
    .expect("rows are distributions")
}

fn main() {
    let members = vec![
        member("muril", [[0.6, 0.3, 0.1], [0.2, 0.3, 0.5]]),
        member("banglabert", [[0.2, 0.7, 0.1], [0.1, 0.6, 0.3]]),
        member("indicbertv2", [[0.5, 0.4, 0.1], [0.3, 0.3, 0.4]]),
    ];
    let specs = [
        ("soft", EnsembleSpec::soft(vec![])),
        ("weighted 0.5/0.3/0.2", EnsembleSpec::preset("weighted-1c").unwrap()),
        ("hard", EnsembleSpec::hard(vec![], TieBreak::SoftFallback)),
    ];
    for (name, spec) in specs {
        let fused = spec.fuse(&members).expect("members are aligned");
        println!("{name}  ({})", fused.model_id);
        for (i, id) in fused.sample_ids.iter().enumerate() {
            let row: Vec<String> = fused.probs.row(i).iter().map(|p| format!("{p:.3}")).collect();
            println!("  {id}: [{}] -> {}", row.join(", "), argmax_labels(&fused)[i]);
        }
    }
}
