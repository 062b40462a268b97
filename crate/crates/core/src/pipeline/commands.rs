use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::data::{label_distribution, DatasetSplit, SchemaSet, SplitName, TaskId};
use crate::ensemble::{argmax_labels, EnsembleSpec, FusionMethod, PredictionFile, PredictionMatrix, TieBreak};
use crate::error::{Error, Result};
use crate::evaluation::{error_report, evaluate, majority_baseline, MetricsReport};
use crate::fingerprint::Fingerprinter;
use crate::model::{predict_proba, train, TrainedModel, TrainingLog};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Keeps ids usable as a single path component.
pub fn sanitize(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    match s.trim_matches('.') {
        "" => "_".into(),
        t => t.to_string(),
    }
}

/// Per-split label tallies written by `prepare`.
#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub table: PathBuf,
    pub splits: Vec<(SplitName, usize, String)>,
}

/// Loads every configured split, validates it against the label schemas
/// and writes `label_distribution.tsv`.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    let schemas = SchemaSet::standard();
    let mut rows = String::from("split\ttask\tlabel\tcount\n");
    let mut splits = Vec::new();
    for name in [SplitName::Train, SplitName::Dev, SplitName::Test] {
        if cfg.split_path(name).is_none() {
            continue;
        }
        let split = cfg.load_split(name)?;
        prepare_rows(&split, &schemas, &mut rows)?;
        splits.push((name, split.len(), split.fingerprint()));
    }
    if splits.is_empty() {
        return Err(Error::Config(
            "no data files configured (data.train / data.dev / data.test)".into(),
        ));
    }
    let mut out = String::new();
    for (name, n, fp) in &splits {
        writeln!(out, "# {name}: {n} samples, data fingerprint {fp}").unwrap();
    }
    out.push_str(&rows);
    let table = cfg.out_dir.join("label_distribution.tsv");
    write_file(&table, out)?;
    Ok(PrepareSummary { table, splits })
}

/// Appends one row per label and a `TOTAL` row per labelled task.
pub fn prepare_rows(split: &DatasetSplit, schemas: &SchemaSet, out: &mut String) -> Result<()> {
    for task in split.labeled_tasks() {
        let dist = label_distribution(split, task, schemas.get(task))?;
        for label in schemas.get(task).labels() {
            writeln!(out, "{}\t{task}\t{label}\t{}", split.name, dist.get(label).unwrap_or(0)).unwrap();
        }
        writeln!(out, "{}\t{task}\tTOTAL\t{}", split.name, dist.total()).unwrap();
    }
    Ok(())
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model_dir: PathBuf,
    pub model: TrainedModel,
    pub log: TrainingLog,
}

pub fn model_dir(cfg: &RunConfig, model_id: &str) -> PathBuf {
    cfg.out_dir.join("models").join(sanitize(model_id))
}

/// Trains on the configured train split and writes the model directory
/// with `manifest.txt` and `losses.tsv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let model_config = cfg.model_config()?;
    let split = cfg.load_split(SplitName::Train)?;
    let (model, log) = train(&split, &model_config, &cfg.resolver())?;
    let dir = model_dir(cfg, model.model_id());
    model.save(&dir)?;
    write_file(&dir.join("losses.tsv"), log.to_tsv())?;
    write_file(
        &dir.join("manifest.txt"),
        manifest(cfg, &model, &log, &split.fingerprint()),
    )?;
    Ok(TrainOutcome {
        model_dir: dir,
        model,
        log,
    })
}

fn manifest(cfg: &RunConfig, model: &TrainedModel, log: &TrainingLog, data_fp: &str) -> String {
    let t = &model.config().training;
    let mut m = String::new();
    writeln!(m, "model_id = {}", model.model_id()).unwrap();
    writeln!(m, "fingerprint = {}", model.fingerprint()).unwrap();
    writeln!(m, "data_fingerprint = {data_fp}").unwrap();
    writeln!(m, "encoder = {}", model.config().encoder.short_name()).unwrap();
    writeln!(
        m,
        "tasks = {}",
        model
            .config()
            .tasks()
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(",")
    )
    .unwrap();
    writeln!(m, "learning_rate = {:e}", t.learning_rate).unwrap();
    writeln!(m, "batch_size = {}", t.batch_size).unwrap();
    writeln!(m, "epochs = {}", t.epochs).unwrap();
    writeln!(m, "optimizer = adamw").unwrap();
    writeln!(m, "weight_decay = {}", t.weight_decay).unwrap();
    writeln!(m, "seed = {}", t.seed).unwrap();
    writeln!(m, "steps = {}", log.steps.len()).unwrap();
    writeln!(m, "wall_clock_secs = {:.3}", log.wall_clock_secs).unwrap();
    m.push_str("\n# epoch\tmean_loss\n");
    for (i, loss) in log.epoch_means().iter().enumerate() {
        writeln!(m, "# {}\t{loss:.6}", i + 1).unwrap();
    }
    m.push_str("\n# configuration\n");
    for line in cfg.to_toml().lines() {
        writeln!(m, "# {line}").unwrap();
    }
    m
}

/// Where predictions come from.
#[derive(Debug, Clone)]
pub enum Predictor {
    /// A saved model directory.
    Model(PathBuf),
    /// The most frequent train label of each task, as one-hot rows.
    Majority,
}

#[derive(Debug, Clone)]
pub struct PredictRequest {
    pub predictor: Predictor,
    pub split: SplitName,
    /// Overrides the configured file for `split`.
    pub input: Option<PathBuf>,
    /// Fingerprint the model must carry, when known.
    pub expected_fingerprint: Option<String>,
}

/// Writes one prediction file per head to
/// `predictions/<model>/<split>.<task>.json`.
pub fn cmd_predict(cfg: &RunConfig, req: &PredictRequest) -> Result<Vec<PathBuf>> {
    let split = match &req.input {
        Some(p) => cfg.load_split_file(p, req.split)?,
        None => cfg.load_split(req.split)?,
    };
    let data_fp = split.fingerprint();
    let files = match &req.predictor {
        Predictor::Model(dir) => {
            let model = TrainedModel::load(dir)?;
            if let Some(fp) = &req.expected_fingerprint {
                model.check_fingerprint(fp, &format!("model in {} vs configuration", dir.display()))?;
            }
            predict_proba(&model, &split)?
                .into_iter()
                .map(|matrix| PredictionFile {
                    matrix,
                    model_fingerprint: model.fingerprint().to_string(),
                    data_fingerprint: data_fp.clone(),
                    fusion: None,
                })
                .collect::<Vec<_>>()
        }
        Predictor::Majority => majority_files(cfg, &split)?,
    };
    let mut written = Vec::new();
    for f in files {
        let path = cfg
            .out_dir
            .join("predictions")
            .join(sanitize(&f.matrix.model_id))
            .join(format!("{}.{}.json", req.split, f.matrix.task));
        write_file(&path, f.to_json())?;
        written.push(path);
    }
    Ok(written)
}

fn majority_files(cfg: &RunConfig, split: &DatasetSplit) -> Result<Vec<PredictionFile>> {
    let train = cfg.load_split(SplitName::Train)?;
    let schemas = SchemaSet::standard();
    let mut fp = Fingerprinter::new("majority");
    fp.field(&train.fingerprint());
    let fingerprint = fp.finish();
    train
        .labeled_tasks()
        .into_iter()
        .map(|task| {
            let schema = schemas.get(task);
            let labels = majority_baseline(&train, task, schema, split.len())?;
            let hot = schema.index_of(&labels[0]).expect("majority label is in schema");
            let probs =
                crate::autograd::Matrix::from_shape_fn(
                    (split.len(), schema.len()),
                    |(_, j)| {
                        if j == hot {
                            1.0
                        } else {
                            0.0
                        }
                    },
                );
            Ok(PredictionFile {
                matrix: PredictionMatrix::new("majority", task, schema.labels().to_vec(), probs, split.ids())?,
                model_fingerprint: fingerprint.clone(),
                data_fingerprint: split.fingerprint(),
                fusion: None,
            })
        })
        .collect()
}

/// Command-line adjustments to the configured ensemble.
#[derive(Debug, Clone, Default)]
pub struct FuseOptions {
    pub method: Option<FusionMethod>,
    pub weights: Option<Vec<f64>>,
    pub tie_break: Option<TieBreak>,
}

/// The configured ensemble with `opts` applied; soft voting over every
/// input when nothing is configured.
pub fn resolve_ensemble(cfg: &RunConfig, opts: &FuseOptions) -> Result<EnsembleSpec> {
    let mut spec = cfg.ensemble.clone().unwrap_or_else(|| EnsembleSpec::soft(Vec::new()));
    if let Some(m) = opts.method {
        if m != spec.method {
            spec.weights = None;
        }
        spec.method = m;
    }
    if let Some(w) = &opts.weights {
        spec.weights = Some(w.clone());
    }
    if let Some(t) = opts.tie_break {
        spec.tie_break = t;
    }
    spec.validate()?;
    Ok(spec)
}

/// Fuses member files task by task; writes `fused/<method>.<task>.json`.
pub fn cmd_fuse(cfg: &RunConfig, inputs: &[PathBuf], opts: &FuseOptions) -> Result<Vec<PathBuf>> {
    let spec = resolve_ensemble(cfg, opts)?;
    let mut by_task: BTreeMap<TaskId, Vec<PredictionFile>> = BTreeMap::new();
    for p in inputs {
        let f = PredictionFile::read(p)?;
        by_task.entry(f.matrix.task).or_default().push(f);
    }
    if by_task.is_empty() {
        return Err(Error::Validation("no prediction files to fuse".into()));
    }
    let mut written = Vec::new();
    for (task, files) in by_task {
        let fused = PredictionFile::fuse(&spec, &files)?;
        let path = cfg
            .out_dir
            .join("fused")
            .join(format!("{}.{task}.json", spec.method.as_str()));
        write_file(&path, fused.to_json())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    pub dir: PathBuf,
    pub report: MetricsReport,
}

/// Scores prediction files from one model (one file per task) against the
/// gold labels of `split` and writes `metrics.json`, per-task confusion
/// CSVs and heatmaps, and `errors.md`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    inputs: &[PathBuf],
    split: SplitName,
    gold: Option<&Path>,
) -> Result<EvaluateOutcome> {
    let files: Vec<PredictionFile> = inputs.iter().map(|p| PredictionFile::read(p)).collect::<Result<_>>()?;
    let Some(first) = files.first() else {
        return Err(Error::Validation("no prediction files to evaluate".into()));
    };
    let data = match gold {
        Some(p) => cfg.load_split_file(p, split)?,
        None => cfg.load_split(split)?,
    };
    let data_fp = data.fingerprint();
    let ids = data.ids();
    let mut preds = BTreeMap::new();
    for (f, path) in files.iter().zip(inputs) {
        if f.model_fingerprint != first.model_fingerprint {
            return Err(Error::FingerprintMismatch {
                context: format!("{} vs {}", path.display(), inputs[0].display()),
                expected: first.model_fingerprint.clone(),
                found: f.model_fingerprint.clone(),
            });
        }
        if f.data_fingerprint != data_fp {
            return Err(Error::FingerprintMismatch {
                context: format!("data behind {} vs {split} split", path.display()),
                expected: data_fp.clone(),
                found: f.data_fingerprint.clone(),
            });
        }
        if let Some(i) = (0..ids.len()).find(|&i| f.matrix.sample_ids.get(i) != Some(&ids[i])) {
            return Err(Error::Alignment(format!(
                "{}: sample {} is {:?}, expected {:?}",
                path.display(),
                i,
                f.matrix.sample_ids.get(i),
                ids[i]
            )));
        }
        if f.matrix.sample_ids.len() != ids.len() {
            return Err(Error::Alignment(format!(
                "{}: {} rows for {} samples",
                path.display(),
                f.matrix.len(),
                ids.len()
            )));
        }
        if preds.insert(f.matrix.task, argmax_labels(&f.matrix)).is_some() {
            return Err(Error::Validation(format!(
                "two prediction files for task {}",
                f.matrix.task
            )));
        }
    }
    let schemas = SchemaSet::standard();
    let mut report = evaluate(&preds, &data, &schemas, cfg.metrics.task_weights.as_ref())?;
    report.model_id = Some(first.matrix.model_id.clone());
    report.model_fingerprint = Some(first.model_fingerprint.clone());
    let errors = error_report(
        &data,
        &preds,
        &schemas,
        cfg.metrics.error_examples,
        cfg.metrics.recall_threshold,
    )?;

    let dir = cfg.out_dir.join("eval").join(sanitize(&first.matrix.model_id));
    write_file(&dir.join("metrics.json"), report.to_json())?;
    for (task, cm) in &report.confusion {
        write_file(&dir.join(format!("confusion.{task}.csv")), cm.to_csv())?;
        cm.write_heatmap(&dir.join(format!("confusion.{task}.png")))?;
    }
    write_file(&dir.join("errors.md"), errors.to_markdown())?;
    Ok(EvaluateOutcome { dir, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_keeps_plain_ids() {
        assert_eq!(sanitize("muril"), "muril");
        assert_eq!(sanitize("weighted(a,b)"), "weighted_a_b_");
        assert_eq!(sanitize("../x"), "_x");
        assert_eq!(sanitize(""), "_");
    }
}
