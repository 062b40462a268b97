//! Run configuration: a TOML file layered over named presets, with command
//! line and environment overrides on top.
//!
//! ```toml
//! presets = ["toy"]
//! out_dir = "runs/demo"
//!
//! [data]
//! train = "train.tsv"
//! test = "test.tsv"
//!
//! [model]
//! mode = "multitask"
//!
//! [training]
//! epochs = 5
//! ```
//!
//! Precedence, lowest first: built-in defaults, presets (in order), the file
//! body, then `--seed` / `--out` / `--format` and the `HATEFUSE_DATA_ROOT` /
//! `HATEFUSE_CACHE_DIR` environment variables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::data::{load_split_with, DataFormat, DatasetSplit, LoadOptions, SchemaSet, SplitName, TaskId};
use crate::encoder::{BackboneResolver, EncoderConfig};
use crate::ensemble::EnsembleSpec;
use crate::error::{Error, Result};
use crate::evaluation::DEFAULT_RECALL_THRESHOLD;
use crate::model::{LossWeights, ModelConfig, TrainingConfig};

pub const DATA_ROOT_ENV: &str = "HATEFUSE_DATA_ROOT";

const PRESETS: &[(&str, &str, &str)] = &[
    (
        "finetune",
        "learning rate 2e-5, batch size 16, 3 epochs, AdamW",
        r#"
[training]
learning_rate = 2e-5
batch_size = 16
epochs = 3
optimizer = "adamw"
"#,
    ),
    (
        "weighted-1c",
        "weighted vote 0.5 / 0.3 / 0.2 over muril, banglabert, indicbertv2",
        r#"
[ensemble]
method = "weighted"
members = ["muril", "banglabert", "indicbertv2"]
weights = [0.5, 0.3, 0.2]
"#,
    ),
    (
        "multitask",
        "three heads, loss weights 1 / 1 / 1",
        r#"
[model]
mode = "multitask"

[loss]
alpha = 1.0
beta = 1.0
gamma = 1.0
"#,
    ),
    (
        "muril",
        "MuRIL base encoder",
        r#"
[model]
id = "muril"

[encoder]
family = "transformer"
backbone_id = "google/muril-base-cased"
hidden_dim = 768
"#,
    ),
    (
        "banglabert",
        "BanglaBERT encoder",
        r#"
[model]
id = "banglabert"

[encoder]
family = "transformer"
backbone_id = "csebuetnlp/banglabert"
hidden_dim = 768
"#,
    ),
    (
        "indicbertv2",
        "IndicBERTv2 encoder",
        r#"
[model]
id = "indicbertv2"

[encoder]
family = "transformer"
backbone_id = "ai4bharat/IndicBERTv2-MLM-only"
hidden_dim = 768
"#,
    ),
    (
        "bilstm-glove",
        "BiLSTM over 300-d GloVe vectors",
        r#"
[model]
id = "bilstm-glove"

[encoder]
family = "recurrent"
recurrent_cell = "bilstm"
embedding_source = "glove"
embedding_dim = 300
embedding_path = "glove.300d.txt"
hidden_dim = 256
"#,
    ),
    (
        "bigru-fasttext",
        "BiGRU over 300-d fastText vectors",
        r#"
[model]
id = "bigru-fasttext"

[encoder]
family = "recurrent"
recurrent_cell = "bigru"
embedding_source = "fasttext"
embedding_dim = 300
embedding_path = "cc.bn.300.vec"
hidden_dim = 256
"#,
    ),
    (
        "toy",
        "hashed n-gram encoder with settings that converge on small data",
        r#"
[model]
id = "toy"

[encoder]
family = "toy"
hidden_dim = 256

[training]
learning_rate = 0.05
epochs = 20
"#,
    ),
];

/// Names and one-line descriptions of the built-in presets.
pub fn presets() -> impl Iterator<Item = (&'static str, &'static str)> {
    PRESETS.iter().map(|(n, d, _)| (*n, *d))
}

fn preset_table(name: &str) -> Result<Table> {
    let (_, _, body) = PRESETS.iter().find(|(n, _, _)| *n == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown preset {name:?}; known: {}",
            PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")
        ))
    })?;
    Ok(body.parse::<Table>().expect("built-in presets parse"))
}

/// Recursively overlays `over` onto `base`; tables merge, other values
/// replace.
pub fn deep_merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => deep_merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory relative split paths are resolved against.
    pub root: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Overrides detection from the file extension.
    pub format: Option<DataFormat>,
    /// Task of a bare `label` column.
    pub label_task: Option<TaskId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Single,
    #[default]
    Multitask,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Defaults to a name derived from the encoder.
    pub id: Option<String>,
    pub mode: ModeName,
    /// Required in single-task mode.
    pub task: Option<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Weights of the multitask score; equal weights when absent.
    pub task_weights: Option<BTreeMap<TaskId, f64>>,
    pub error_examples: usize,
    pub recall_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            task_weights: None,
            error_examples: 10,
            recall_threshold: DEFAULT_RECALL_THRESHOLD,
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_encoder() -> EncoderConfig {
    EncoderConfig::toy(256)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Searched for backbone checkpoints and word vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Table::new().try_into().expect("empty table gives defaults")
    }
}

/// Values supplied on the command line or through the environment.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub presets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<DataFormat>,
    pub data_root: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Overrides {
    /// Reads `HATEFUSE_DATA_ROOT` and `HATEFUSE_CACHE_DIR`.
    pub fn with_env(mut self) -> Self {
        if let Some(v) = std::env::var_os(DATA_ROOT_ENV) {
            self.data_root = Some(PathBuf::from(v));
        }
        if let Some(v) = std::env::var_os(crate::encoder::CACHE_DIR_ENV) {
            self.cache_dir = Some(PathBuf::from(v));
        }
        self
    }
}

impl RunConfig {
    /// Builds the effective configuration. Relative `data.root` and
    /// `out_dir` values in the file are taken relative to the file.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let (mut body, base_dir) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let table = text.parse::<Table>().map_err(|e| Error::Parse {
                    path: p.display().to_string(),
                    line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
                    message: e.message().to_string(),
                })?;
                (table, p.parent().map(Path::to_path_buf))
            }
            None => (Table::new(), None),
        };
        let mut names: Vec<String> = match body.remove("presets") {
            None => Vec::new(),
            Some(Value::Array(a)) => a
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s),
                    other => Err(Error::Config(format!("presets must be strings, got {other}"))),
                })
                .collect::<Result<_>>()?,
            Some(other) => return Err(Error::Config(format!("presets must be a list, got {other}"))),
        };
        names.extend(overrides.presets.iter().cloned());
        let mut merged = Table::new();
        for name in &names {
            deep_merge(&mut merged, preset_table(name)?);
        }
        deep_merge(&mut merged, body);
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;

        if let Some(dir) = &base_dir {
            let anchor = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            anchor(&mut cfg.out_dir);
            if let Some(r) = cfg.data.root.as_mut() {
                anchor(r);
            }
            if cfg.data.root.is_none() {
                cfg.data.root = Some(dir.clone());
            }
        }
        if let Some(seed) = overrides.seed {
            cfg.training.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        if let Some(f) = overrides.format {
            cfg.data.format = Some(f);
        }
        if let Some(r) = &overrides.data_root {
            cfg.data.root = Some(r.clone());
        }
        if let Some(c) = &overrides.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?.validate()?;
        if let Some(e) = &self.ensemble {
            e.validate()?;
        }
        if !(0.0..=1.0).contains(&self.metrics.recall_threshold) {
            return Err(Error::Config("metrics.recall_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn model_id(&self) -> String {
        self.model.id.clone().unwrap_or_else(|| self.encoder.short_name())
    }

    /// The model this configuration trains.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let id = self.model_id();
        let training = self.training.clone();
        match (self.model.mode, self.model.task) {
            (ModeName::Single, Some(task)) => Ok(ModelConfig::single(id, self.encoder.clone(), task, training)),
            (ModeName::Single, None) => Err(Error::Config("single-task mode needs model.task".into())),
            (ModeName::Multitask, None) => Ok(ModelConfig::multitask(id, self.encoder.clone(), self.loss, training)),
            (ModeName::Multitask, Some(t)) => Err(Error::Config(format!(
                "model.task = {t:?} only applies in single-task mode"
            ))),
        }
    }

    pub fn split_path(&self, split: SplitName) -> Option<PathBuf> {
        let p = match split {
            SplitName::Train => self.data.train.as_ref(),
            SplitName::Dev => self.data.dev.as_ref(),
            SplitName::Test => self.data.test.as_ref(),
        }?;
        Some(match &self.data.root {
            Some(root) if p.is_relative() => root.join(p),
            _ => p.clone(),
        })
    }

    /// Loads a configured split, failing when it is not configured, missing
    /// or empty.
    pub fn load_split(&self, split: SplitName) -> Result<DatasetSplit> {
        let path = self
            .split_path(split)
            .ok_or_else(|| Error::Config(format!("no data.{split} file configured")))?;
        self.load_split_file(&path, split)
    }

    pub fn load_split_file(&self, path: &Path, split: SplitName) -> Result<DatasetSplit> {
        if !path.is_file() {
            return Err(Error::Validation(format!(
                "{split} file {} does not exist",
                path.display()
            )));
        }
        let options = LoadOptions {
            format: self.data.format.unwrap_or_else(|| DataFormat::from_path(path)),
            label_task: self.data.label_task,
        };
        let data = load_split_with(path, split, &SchemaSet::standard(), &options)?;
        if data.is_empty() {
            return Err(Error::Validation(format!(
                "{split} file {} has no samples",
                path.display()
            )));
        }
        Ok(data)
    }

    pub fn resolver(&self) -> BackboneResolver {
        let mut dirs: Vec<PathBuf> = self.cache_dir.iter().cloned().collect();
        dirs.extend(BackboneResolver::from_env().search_dirs().iter().cloned());
        BackboneResolver::new(dirs)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::FusionMethod;
    use crate::model::TaskMode;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn defaults_are_multitask_toy() {
        let c = RunConfig::default();
        assert_eq!(c.model_config().unwrap().mode().unwrap(), TaskMode::Multitask);
        assert_eq!(c.training.learning_rate, 2e-5);
        assert_eq!(c.training.batch_size, 16);
        assert_eq!(c.training.epochs, 3);
    }

    #[test]
    fn presets_layer_under_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "presets = [\"toy\"]\n[training]\nepochs = 2\n");
        let c = RunConfig::load(
            Some(&p),
            &Overrides {
                presets: vec!["weighted-1c".into()],
                seed: Some(9),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.training.epochs, 2);
        assert_eq!(c.training.learning_rate, 0.05);
        assert_eq!(c.training.seed, 9);
        assert_eq!(c.model_id(), "toy");
        let e = c.ensemble.unwrap();
        assert_eq!(e.method, FusionMethod::Weighted);
        assert_eq!(e.weights, Some(vec![0.5, 0.3, 0.2]));
        assert_eq!(c.data.root.as_deref(), Some(dir.path()));
        assert_eq!(c.out_dir, dir.path().join("runs"));
    }

    #[test]
    fn every_preset_loads() {
        for (name, _) in presets() {
            let c = RunConfig::load(
                None,
                &Overrides {
                    presets: vec![name.to_string()],
                    ..Overrides::default()
                },
            );
            assert!(c.is_ok(), "{name}: {:?}", c.err());
        }
        assert!(matches!(
            RunConfig::load(
                None,
                &Overrides {
                    presets: vec!["nope".into()],
                    ..Overrides::default()
                }
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_modes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "[training]\nepoch = 2\n");
        assert!(matches!(
            RunConfig::load(Some(&p), &Overrides::default()),
            Err(Error::Config(_))
        ));
        let p = write(dir.path(), "[model]\nmode = \"single\"\n");
        assert!(RunConfig::load(Some(&p), &Overrides::default()).is_err());
        let p = write(dir.path(), "[model]\nmode = \"single\"\ntask = \"severity\"\n");
        let c = RunConfig::load(Some(&p), &Overrides::default()).unwrap();
        assert_eq!(
            c.model_config().unwrap().mode().unwrap(),
            TaskMode::Single(TaskId::Severity)
        );
        let p = write(dir.path(), "[training\n");
        assert!(matches!(
            RunConfig::load(Some(&p), &Overrides::default()),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn environment_overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "cache_dir = \"/nowhere\"\n[data]\nroot = \"d\"\ntrain = \"t.tsv\"\n",
        );
        let c = RunConfig::load(
            Some(&p),
            &Overrides {
                data_root: Some("/data".into()),
                cache_dir: Some("/cache".into()),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(c.split_path(SplitName::Train).unwrap(), PathBuf::from("/data/t.tsv"));
        assert_eq!(c.resolver().search_dirs()[0], PathBuf::from("/cache"));
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::load(
            None,
            &Overrides {
                presets: vec!["weighted-1c".into()],
                ..Overrides::default()
            },
        )
        .unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}
