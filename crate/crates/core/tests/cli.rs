use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hatefuse::data::{write_split, DataFormat, DatasetSplit, Sample, SchemaSet, SplitName, TaskId};
use hatefuse::ensemble::PredictionFile;
use hatefuse::synthetic::separable_split;
use tempfile::TempDir;

fn hatefuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hatefuse"))
        .current_dir(dir)
        .env_remove("HATEFUSE_DATA_ROOT")
        .env_remove("HATEFUSE_CACHE_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn retag(split: DatasetSplit, name: SplitName) -> DatasetSplit {
    DatasetSplit::new(name, split.samples, &SchemaSet::standard()).unwrap()
}

/// A workspace with separable train/test files and a toy run config.
fn workspace(extra: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_split(&separable_split(80, 1), &dir.path().join("train.tsv"), DataFormat::Tsv).unwrap();
    write_split(
        &retag(separable_split(30, 2), SplitName::Test),
        &dir.path().join("test.tsv"),
        DataFormat::Tsv,
    )
    .unwrap();
    fs::write(
        dir.path().join("run.toml"),
        format!(
            "presets = [\"toy\"]\nout_dir = \"out\"\n\n[data]\ntrain = \"train.tsv\"\ntest = \"test.tsv\"\n\n[training]\nepochs = 4\n{extra}"
        ),
    )
    .unwrap();
    dir
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn full_pipeline_through_the_binary() {
    let ws = workspace("");
    let d = ws.path();
    let out = ok(&hatefuse(d, &["prepare", "--config", "run.toml"]));
    assert!(out.contains("train: 80 samples"));
    let table = fs::read_to_string(d.join("out/label_distribution.tsv")).unwrap();
    assert!(table.contains("train\tseverity\tTOTAL\t80"));

    ok(&hatefuse(d, &["train", "--config", "run.toml"]));
    ok(&hatefuse(
        d,
        &["train", "--config", "run.toml", "--seed", "5", "--out", "out2"],
    ));
    let manifest = fs::read_to_string(d.join("out/models/toy/manifest.txt")).unwrap();
    assert!(manifest.contains("learning_rate = 5e-2"));
    assert!(manifest.contains("epochs = 4"));

    ok(&hatefuse(d, &["predict", "--config", "run.toml"]));
    let preds = files_under(&d.join("out/predictions/toy"));
    assert_eq!(preds.len(), 3);
    let f = PredictionFile::read(&preds[0]).unwrap();
    let test_ids: Vec<String> = (0..30).map(|i| format!("s{i:04}")).collect();
    assert_eq!(f.matrix.sample_ids, test_ids);

    ok(&hatefuse(
        d,
        &[
            "predict",
            "--config",
            "run.toml",
            "--seed",
            "5",
            "--out",
            "out2",
            "--model",
            "out2/models/toy",
        ],
    ));
    // Both models carry the id "toy"; the second copy is renamed so fusion
    // can tell the members apart.
    let mut inputs = Vec::new();
    for (run, name) in [("out", "a"), ("out2", "b")] {
        let p = d.join(format!("{run}/predictions/toy/test.type.json"));
        let mut file = PredictionFile::read(&p).unwrap();
        file.matrix.model_id = name.into();
        let q = d.join(format!("{name}.type.json"));
        file.write(&q).unwrap();
        inputs.push(q);
    }
    let out = ok(&hatefuse(
        d,
        &[
            "fuse",
            "--config",
            "run.toml",
            "--method",
            "weighted",
            "--weights",
            "0.7,0.3",
            "a.type.json",
            "b.type.json",
        ],
    ));
    assert!(out.contains("weighted.type.json"));
    let fused = PredictionFile::read(&d.join("out/fused/weighted.type.json")).unwrap();
    assert_eq!(fused.fusion.as_ref().unwrap().weights, Some(vec![0.7, 0.3]));

    let out = ok(&hatefuse(
        d,
        &["evaluate", "--config", "run.toml", "out/fused/weighted.type.json"],
    ));
    assert!(out.contains("type\tmicro_f1"));
    let eval_dir = d.join("out/eval/weighted_a_b_");
    for name in ["metrics.json", "confusion.type.csv", "confusion.type.png", "errors.md"] {
        assert!(eval_dir.join(name).is_file(), "{name}");
    }

    let all: Vec<String> = preds.iter().map(|p| p.display().to_string()).collect();
    let mut args = vec!["evaluate", "--config", "run.toml"];
    args.extend(all.iter().map(String::as_str));
    ok(&hatefuse(d, &args));
    let metrics = fs::read_to_string(d.join("out/eval/toy/metrics.json")).unwrap();
    assert!(metrics.contains("\"weighted_micro_f1\""));
    assert!(metrics.contains("equal task weights"));
}

#[test]
fn default_training_settings_reach_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_split(&separable_split(20, 1), &dir.path().join("train.tsv"), DataFormat::Tsv).unwrap();
    fs::write(dir.path().join("run.toml"), "[data]\ntrain = \"train.tsv\"\n").unwrap();
    ok(&hatefuse(
        dir.path(),
        &["train", "--config", "run.toml", "--preset", "finetune"],
    ));
    let manifest = fs::read_to_string(dir.path().join("runs/models/toy/manifest.txt")).unwrap();
    assert!(manifest.contains("learning_rate = 2e-5"), "{manifest}");
    assert!(manifest.contains("batch_size = 16"));
    assert!(manifest.contains("epochs = 3"));
    assert!(manifest.contains("optimizer = adamw"));
}

#[test]
fn single_task_model_writes_one_file_and_majority_scores() {
    let ws = workspace("\n[model]\nmode = \"single\"\ntask = \"target\"\n");
    let d = ws.path();
    ok(&hatefuse(d, &["train", "--config", "run.toml"]));
    ok(&hatefuse(d, &["predict", "--config", "run.toml"]));
    assert_eq!(files_under(&d.join("out/predictions/toy")).len(), 1);

    ok(&hatefuse(d, &["predict", "--config", "run.toml", "--majority"]));
    let files = files_under(&d.join("out/predictions/majority"));
    assert_eq!(files.len(), 3);
    let args: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    let mut argv = vec!["evaluate", "--config", "run.toml"];
    argv.extend(args.iter().map(String::as_str));
    ok(&hatefuse(d, &argv));
}

#[test]
fn two_sample_prepare_total() {
    let dir = tempfile::tempdir().unwrap();
    let schemas = SchemaSet::standard();
    let samples = vec![
        Sample::new("1", "ক").with_label(TaskId::Type, "None"),
        Sample::new("2", "খ").with_label(TaskId::Type, "Sexism"),
    ];
    let split = DatasetSplit::new(SplitName::Train, samples, &schemas).unwrap();
    write_split(&split, &dir.path().join("tiny.jsonl"), DataFormat::Jsonl).unwrap();
    fs::write(dir.path().join("run.toml"), "[data]\ntrain = \"tiny.jsonl\"\n").unwrap();
    ok(&hatefuse(dir.path(), &["prepare", "--config", "run.toml"]));
    let table = fs::read_to_string(dir.path().join("runs/label_distribution.tsv")).unwrap();
    assert!(table.contains("train\ttype\tTOTAL\t2"));
    assert!(table.contains("train\ttype\tSexism\t1"));
}

#[test]
fn data_root_comes_from_the_environment() {
    let ws = workspace("");
    let data = tempfile::tempdir().unwrap();
    fs::copy(ws.path().join("train.tsv"), data.path().join("train.tsv")).unwrap();
    fs::remove_file(ws.path().join("train.tsv")).unwrap();
    let fails = hatefuse(ws.path(), &["prepare", "--config", "run.toml"]);
    assert_eq!(fails.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_hatefuse"))
        .current_dir(ws.path())
        .env("HATEFUSE_DATA_ROOT", data.path())
        .args(["prepare", "--config", "run.toml"])
        .output()
        .unwrap();
    // The test file now resolves against the data root too, where it is absent.
    assert_eq!(out.status.code(), Some(1));
    fs::copy(ws.path().join("test.tsv"), data.path().join("test.tsv")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hatefuse"))
        .current_dir(ws.path())
        .env("HATEFUSE_DATA_ROOT", data.path())
        .args(["prepare", "--config", "run.toml"])
        .output()
        .unwrap();
    ok(&out);
}

#[test]
fn validation_failures_exit_with_one() {
    let ws = workspace("");
    let d = ws.path();

    fs::write(d.join("empty.tsv"), "id\ttext\ttype\n").unwrap();
    fs::write(d.join("empty.toml"), "[data]\ntrain = \"empty.tsv\"\n").unwrap();
    let out = hatefuse(d, &["prepare", "--config", "empty.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no samples"));

    fs::write(d.join("bad.tsv"), "id\ttext\ttype\n1\tx\tNone\n2\ty\tHateful\n").unwrap();
    fs::write(d.join("bad.toml"), "[data]\ntrain = \"bad.tsv\"\n").unwrap();
    let out = hatefuse(d, &["prepare", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Hateful"));

    // Multitask training without severity or target labels.
    fs::write(
        d.join("typeonly.toml"),
        "presets = [\"toy\"]\n[data]\ntrain = \"bad.tsv\"\n",
    )
    .unwrap();
    fs::write(d.join("bad.tsv"), "id\ttext\ttype\n1\tx\tNone\n2\ty\tSexism\n").unwrap();
    let out = hatefuse(d, &["train", "--config", "typeonly.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("severity"));

    let out = hatefuse(d, &["train", "--config", "run.toml", "--preset", "nonexistent"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatches_are_rejected() {
    let ws = workspace("");
    let d = ws.path();
    ok(&hatefuse(d, &["train", "--config", "run.toml"]));
    // finetune lowers the learning rate, so the configuration describes another model.
    let out = hatefuse(d, &["predict", "--config", "run.toml", "--preset", "finetune"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fingerprint mismatch"));

    ok(&hatefuse(d, &["predict", "--config", "run.toml"]));
    let p = d.join("out/predictions/toy/test.type.json");
    let mut other = PredictionFile::read(&p).unwrap();
    other.matrix.model_id = "other".into();
    other.matrix.sample_ids.swap(3, 4);
    let q = d.join("other.json");
    other.write(&q).unwrap();
    let out = hatefuse(d, &["fuse", "--config", "run.toml", p.to_str().unwrap(), "other.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("s0003"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Evaluating against a different gold split.
    write_split(
        &retag(separable_split(30, 99), SplitName::Test),
        &d.join("other_test.tsv"),
        DataFormat::Tsv,
    )
    .unwrap();
    let out = hatefuse(
        d,
        &[
            "evaluate",
            "--config",
            "run.toml",
            "--gold",
            "other_test.tsv",
            p.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_lists_the_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&hatefuse(dir.path(), &["--help"]));
    for cmd in ["prepare", "train", "predict", "fuse", "evaluate"] {
        assert!(out.contains(cmd), "{cmd}");
    }
    let out = ok(&hatefuse(dir.path(), &["presets"]));
    assert!(out.contains("weighted-1c"));
    assert_eq!(hatefuse(dir.path(), &["frobnicate"]).status.code(), Some(1));
}
