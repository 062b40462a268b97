use std::fmt::Write as _;
use std::time::Instant;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optim::AdamW;
use super::{derive_seed, Head, ModelConfig, TaskMode};
use crate::autograd::{Graph, Matrix, ParamStore, Var};
use crate::data::{preprocess, DatasetSplit, TaskId};
use crate::encoder::{BackboneResolver, Encoder};
use crate::ensemble::PredictionMatrix;
use crate::error::{Error, Result};

/// Loss of one optimisation step. `epoch` and `batch` count from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub task_losses: Vec<(TaskId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub tasks: Vec<TaskId>,
    pub steps: Vec<StepRecord>,
    pub wall_clock_secs: f64,
}

impl TrainingLog {
    pub fn epoch_means(&self) -> Vec<f64> {
        let epochs = self.steps.iter().map(|s| s.epoch).max().unwrap_or(0);
        (1..=epochs)
            .map(|e| {
                let losses: Vec<f64> = self.steps.iter().filter(|s| s.epoch == e).map(|s| s.loss).collect();
                losses.iter().sum::<f64>() / losses.len() as f64
            })
            .collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.loss).collect()
    }

    /// One row per step: epoch, batch, total loss, then one column per task.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("step\tepoch\tbatch\tloss");
        for t in &self.tasks {
            write!(out, "\t{t}").unwrap();
        }
        out.push('\n');
        for (i, s) in self.steps.iter().enumerate() {
            write!(out, "{}\t{}\t{}\t{}", i + 1, s.epoch, s.batch, s.loss).unwrap();
            for (_, l) in &s.task_losses {
                write!(out, "\t{l}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// An encoder with its heads and parameters.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub(crate) config: ModelConfig,
    pub(crate) encoder: Encoder,
    pub(crate) params: ParamStore,
    pub(crate) heads: Vec<Head>,
    pub(crate) fingerprint: String,
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn model_id(&self) -> &str {
        &self.config.model_id
    }

    /// Fingerprint of the configuration that produced the model.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn heads(&self) -> &[Head] {
        &self.heads
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn check_fingerprint(&self, expected: &str, context: &str) -> Result<()> {
        if self.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                context: context.to_string(),
                expected: expected.to_string(),
                found: self.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Per-head probability matrices for raw texts (digits are stripped
    /// here, as in training).
    pub fn probabilities(&self, texts: &[&str]) -> Result<Vec<Matrix>> {
        let clean: Vec<String> = texts.iter().map(|t| preprocess(t)).collect();
        let refs: Vec<&str> = clean.iter().map(String::as_str).collect();
        let batch = self.encoder.encode(&self.params, &refs)?;
        self.heads
            .iter()
            .map(|h| h.probabilities(&self.params, &batch.vectors))
            .collect()
    }
}

/// Gold class indices for every sample, or a pre-flight error naming the
/// task and the first sample without a label.
fn gold_indices(split: &DatasetSplit, config: &ModelConfig, task: TaskId, mode: TaskMode) -> Result<Vec<usize>> {
    let missing = split.missing_labels(task);
    if let Some(first) = missing.first() {
        let what = match mode {
            TaskMode::Multitask => "multitask training needs type, severity and target labels".to_string(),
            TaskMode::Single(_) => format!("training the {task} head needs {task} labels"),
        };
        return Err(Error::Validation(format!(
            "{what}: {} of {} {} samples have no {task} label (first: id {first:?})",
            missing.len(),
            split.len(),
            split.name
        )));
    }
    let schema = config.schemas.get(task);
    split
        .samples
        .iter()
        .map(|s| schema.require_index(s.label(task).expect("checked above"), &format!("sample {}", s.id)))
        .collect()
}

/// Fits a model on `split`. Texts are preprocessed before encoding.
///
/// The loss log holds one entry per step: `epochs × ceil(N / batch_size)`.
pub fn train(
    split: &DatasetSplit,
    config: &ModelConfig,
    resolver: &BackboneResolver,
) -> Result<(TrainedModel, TrainingLog)> {
    config.validate()?;
    let mode = config.mode()?;
    if split.is_empty() {
        return Err(Error::Validation(format!("{} split is empty", split.name)));
    }
    let started = Instant::now();
    let tc = &config.training;
    let tasks = config.tasks();
    let gold: Vec<Vec<usize>> = tasks
        .iter()
        .map(|&t| gold_indices(split, config, t, mode))
        .collect::<Result<_>>()?;

    let texts: Vec<String> = split.samples.iter().map(|s| preprocess(&s.text)).collect();
    let text_refs: Vec<&str> = texts.iter().map(String::as_str).collect();

    let mut params = ParamStore::new();
    let mut enc_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "encoder"));
    let encoder = Encoder::build(&config.encoder, &text_refs, resolver, &mut enc_rng, &mut params)?;
    let heads: Vec<Head> = tasks
        .iter()
        .map(|&t| {
            Head::seeded(
                config.schemas.get(t),
                config.encoder.hidden_dim,
                tc.init_std,
                tc.seed,
                &mut params,
            )
        })
        .collect();
    let weights: Vec<f64> = tasks
        .iter()
        .map(|&t| match mode {
            TaskMode::Single(_) => 1.0,
            TaskMode::Multitask => config.loss_weights.unwrap_or_default().get(t),
        })
        .collect();

    // A frozen encoder gives the same vectors every epoch.
    let cached = if encoder.is_trainable() {
        None
    } else {
        Some(encoder.encode(&params, &text_refs)?.vectors)
    };

    let mut optimizer = AdamW::new(tc.learning_rate, tc.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, "shuffle"));
    let mut steps = Vec::new();
    for epoch in 1..=tc.epochs {
        let mut order: Vec<usize> = (0..split.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for (b, idx) in order.chunks(tc.batch_size).enumerate() {
            let (loss, task_losses, grads) = {
                let mut g = Graph::new(&params);
                let pooled = match &cached {
                    Some(c) => g.constant(c.select(Axis(0), idx)),
                    None => {
                        let batch_texts: Vec<&str> = idx.iter().map(|&i| text_refs[i]).collect();
                        encoder.forward(&mut g, &batch_texts)
                    }
                };
                let mut total: Option<Var> = None;
                let mut task_losses = Vec::with_capacity(heads.len());
                for ((head, gold), &w) in heads.iter().zip(&gold).zip(&weights) {
                    let targets: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
                    let logits = head.logits(&mut g, pooled);
                    let ce = g.cross_entropy(logits, &targets);
                    task_losses.push((head.task(), g.scalar(ce)));
                    if w == 0.0 {
                        continue;
                    }
                    let term = if w == 1.0 { ce } else { g.scale(ce, w) };
                    total = Some(match total {
                        None => term,
                        Some(t) => g.add(t, term),
                    });
                }
                let total = total.expect("at least one positive loss weight");
                let loss = g.scalar(total);
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b + 1,
                        value: loss,
                    });
                }
                let grads = g.backward(total);
                if !grads.all_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b + 1,
                        value: f64::NAN,
                    });
                }
                (loss, task_losses, grads)
            };
            optimizer.step(&mut params, &grads);
            steps.push(StepRecord {
                epoch,
                batch: b + 1,
                loss,
                task_losses,
            });
        }
    }

    let model = TrainedModel {
        fingerprint: config.fingerprint(),
        config: config.clone(),
        encoder,
        params,
        heads,
    };
    let log = TrainingLog {
        tasks,
        steps,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, log))
}

/// One matrix per head, rows in split order.
pub fn predict_proba(model: &TrainedModel, split: &DatasetSplit) -> Result<Vec<PredictionMatrix>> {
    let probs = model.probabilities(&split.texts())?;
    let ids = split.ids();
    model
        .heads
        .iter()
        .zip(probs)
        .map(|(h, p)| PredictionMatrix::new(model.model_id(), h.task(), h.labels.clone(), p, ids.clone()))
        .collect()
}
