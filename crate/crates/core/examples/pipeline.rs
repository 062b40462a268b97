//! The full file-based pipeline driven through the library: prepare,
//! train two toy models, predict, fuse and evaluate. Outputs land under a
//! temporary directory, printed at the end.
//!
//! ```text
//! cargo run --release --example pipeline
//! ```

use hatefuse::data::{write_split, DataFormat, DatasetSplit, SchemaSet, SplitName};
use hatefuse::pipeline::{
    cmd_evaluate, cmd_fuse, cmd_predict, cmd_prepare, cmd_train, FuseOptions, Overrides, PredictRequest, Predictor,
    RunConfig,
};
use hatefuse::synthetic::separable_split;

fn main() -> hatefuse::Result<()> {
    let root = std::env::temp_dir().join("hatefuse-pipeline-example");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    write_split(&separable_split(200, 1), &root.join("train.tsv"), DataFormat::Tsv)?;
    let test = DatasetSplit::new(SplitName::Test, separable_split(60, 2).samples, &SchemaSet::standard())?;
    write_split(&test, &root.join("test.tsv"), DataFormat::Tsv)?;
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        "presets = [\"toy\"]\nout_dir = \"runs\"\n\n[data]\ntrain = \"train.tsv\"\ntest = \"test.tsv\"\n\n[training]\nepochs = 5\n",
    )
    .unwrap();

    let mut cfg = RunConfig::load(Some(&config), &Overrides::default())?;
    println!("wrote {}", cmd_prepare(&cfg)?.table.display());

    let mut type_files = Vec::new();
    for (id, seed) in [("toy-a", 1), ("toy-b", 2), ("toy-c", 3)] {
        cfg.model.id = Some(id.into());
        cfg.training.seed = seed;
        let trained = cmd_train(&cfg)?;
        let files = cmd_predict(
            &cfg,
            &PredictRequest {
                predictor: Predictor::Model(trained.model_dir),
                split: SplitName::Test,
                input: None,
                expected_fingerprint: None,
            },
        )?;
        type_files.extend(
            files
                .into_iter()
                .filter(|p| p.to_string_lossy().ends_with(".type.json")),
        );
    }

    let opts = FuseOptions {
        method: Some(hatefuse::ensemble::FusionMethod::Weighted),
        weights: Some(vec![0.5, 0.3, 0.2]),
        tie_break: None,
    };
    let fused = cmd_fuse(&cfg, &type_files, &opts)?;
    let eval = cmd_evaluate(&cfg, &fused, SplitName::Test, None)?;
    println!(
        "fused type micro-F1 {:.3}",
        eval.report.per_task_micro_f1.values().next().unwrap()
    );
    println!("reports in {}", eval.dir.display());
    Ok(())
}
