//! Classification heads, the multitask loss and the training loop.
//!
//! A model is one encoder plus one head per task. Single-task models carry
//! one head; multitask models carry three heads over a shared encoder and
//! train on `α·CE_type + β·CE_severity + γ·CE_target`.

mod checkpoint;
mod optim;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use checkpoint::{MODEL_FILE, MODEL_FORMAT, WEIGHTS_FILE};
pub use optim::AdamW;
pub use train::{predict_proba, train, StepRecord, TrainedModel, TrainingLog};

use crate::autograd::{softmax_rows, Graph, Matrix, ParamId, ParamStore, Var};
use crate::data::{LabelSchema, PerTask, SchemaSet, TaskId};
use crate::encoder::{EncodedBatch, EncoderConfig};
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub task: TaskId,
    pub num_classes: usize,
}

impl HeadConfig {
    pub fn for_task(schemas: &SchemaSet, task: TaskId) -> Self {
        HeadConfig {
            task,
            num_classes: schemas.get(task).len(),
        }
    }

    pub fn validate(&self, schemas: &SchemaSet) -> Result<()> {
        let expected = schemas.get(self.task).len();
        if self.num_classes != expected {
            return Err(Error::Config(format!(
                "{} head has {} classes but the {} schema has {}",
                self.task, self.num_classes, self.task, expected
            )));
        }
        Ok(())
    }
}

/// Per-task coefficients of the multitask loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let w = LossWeights { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be finite and nonnegative, got ({}, {}, {})",
                self.alpha, self.beta, self.gamma
            )));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one loss weight must be positive".into()));
        }
        Ok(())
    }

    pub fn get(&self, task: TaskId) -> f64 {
        match task {
            TaskId::Type => self.alpha,
            TaskId::Severity => self.beta,
            TaskId::Target => self.gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Adam with decoupled weight decay.
    #[default]
    AdamW,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    /// Standard deviation of the head weight initialisation; 0 gives
    /// zero-initialised heads.
    pub init_std: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 2e-5,
            batch_size: 16,
            epochs: 3,
            optimizer: Optimizer::AdamW,
            weight_decay: 0.01,
            init_std: 0.02,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be finite and nonnegative".into()));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(Error::Config("init_std must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    Single(TaskId),
    Multitask,
}

/// Everything that determines a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model_id: String,
    pub encoder: EncoderConfig,
    pub heads: Vec<HeadConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_weights: Option<LossWeights>,
    pub training: TrainingConfig,
    pub schemas: SchemaSet,
}

impl ModelConfig {
    pub fn single(model_id: impl Into<String>, encoder: EncoderConfig, task: TaskId, training: TrainingConfig) -> Self {
        let schemas = SchemaSet::standard();
        ModelConfig {
            model_id: model_id.into(),
            encoder,
            heads: vec![HeadConfig::for_task(&schemas, task)],
            loss_weights: None,
            training,
            schemas,
        }
    }

    pub fn multitask(
        model_id: impl Into<String>,
        encoder: EncoderConfig,
        weights: LossWeights,
        training: TrainingConfig,
    ) -> Self {
        let schemas = SchemaSet::standard();
        ModelConfig {
            model_id: model_id.into(),
            encoder,
            heads: TaskId::ALL.iter().map(|&t| HeadConfig::for_task(&schemas, t)).collect(),
            loss_weights: Some(weights),
            training,
            schemas,
        }
    }

    /// One head without loss weights, or three distinct heads with them.
    pub fn mode(&self) -> Result<TaskMode> {
        match (self.heads.as_slice(), &self.loss_weights) {
            ([h], None) => Ok(TaskMode::Single(h.task)),
            ([_], Some(_)) => Err(Error::Config("single-task models take no loss weights".into())),
            ([a, b, c], Some(_)) => {
                let mut tasks = [a.task, b.task, c.task];
                tasks.sort();
                if tasks != TaskId::ALL {
                    return Err(Error::Config(
                        "multitask heads must cover type, severity and target".into(),
                    ));
                }
                Ok(TaskMode::Multitask)
            }
            ([_, _, _], None) => Err(Error::Config("multitask models need loss weights".into())),
            (hs, _) => Err(Error::Config(format!(
                "a model has 1 head (single-task) or 3 heads (multitask), got {}",
                hs.len()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id must not be empty".into()));
        }
        self.encoder.validate()?;
        self.training.validate()?;
        self.mode()?;
        for h in &self.heads {
            h.validate(&self.schemas)?;
        }
        if let Some(w) = &self.loss_weights {
            w.validate()?;
        }
        Ok(())
    }

    pub fn tasks(&self) -> Vec<TaskId> {
        self.heads.iter().map(|h| h.task).collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new("model");
        f.field(&self.model_id)
            .field(&self.encoder.fingerprint())
            .field(&json(&self.heads))
            .field(&json(&self.loss_weights))
            .field(&json(&self.training))
            .field(&json(&self.schemas));
        f.finish()
    }
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

/// Deterministic sub-seed for one consumer of randomness.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut f = Fingerprinter::new("seed");
    f.field(&seed.to_string()).field(label);
    u64::from_str_radix(&f.finish(), 16).expect("fingerprint is hex")
}

/// Per-sample probabilities from the three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct MultitaskPrediction {
    pub type_probs: Vec<f64>,
    pub severity_probs: Vec<f64>,
    pub target_probs: Vec<f64>,
}

impl MultitaskPrediction {
    pub fn get(&self, task: TaskId) -> &[f64] {
        match task {
            TaskId::Type => &self.type_probs,
            TaskId::Severity => &self.severity_probs,
            TaskId::Target => &self.target_probs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for task in TaskId::ALL {
            let p = self.get(task);
            let sum: f64 = p.iter().sum();
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Validation(format!(
                    "{task} probabilities are not a distribution"
                )));
            }
        }
        Ok(())
    }
}

/// Affine classification layer over the pooled encoder output.
#[derive(Debug, Clone)]
pub struct Head {
    pub config: HeadConfig,
    pub labels: Vec<String>,
    weight: ParamId,
    bias: ParamId,
}

fn head_param(task: TaskId, part: &str) -> String {
    format!("head.{task}.{part}")
}

impl Head {
    /// Weights drawn from N(0, init_std²), biases zero.
    pub fn new(
        schema: &LabelSchema,
        hidden_dim: usize,
        init_std: f64,
        rng: &mut ChaCha8Rng,
        params: &mut ParamStore,
    ) -> Self {
        let c = schema.len();
        let weight = if init_std > 0.0 {
            let normal = Normal::new(0.0, init_std).expect("positive std");
            Matrix::from_shape_simple_fn((c, hidden_dim), || normal.sample(rng))
        } else {
            Matrix::zeros((c, hidden_dim))
        };
        Head {
            config: HeadConfig {
                task: schema.task,
                num_classes: c,
            },
            labels: schema.labels().to_vec(),
            weight: params.add(head_param(schema.task, "weight"), weight, true),
            bias: params.add(head_param(schema.task, "bias"), Matrix::zeros((1, c)), false),
        }
    }

    /// Fresh head seeded from `(seed, task)` alone, so adding or removing
    /// other heads does not change its initialisation.
    pub fn seeded(schema: &LabelSchema, hidden_dim: usize, init_std: f64, seed: u64, params: &mut ParamStore) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &head_param(schema.task, "init")));
        Head::new(schema, hidden_dim, init_std, &mut rng, params)
    }

    pub fn restore(schema: &LabelSchema, hidden_dim: usize, params: &ParamStore) -> Result<Self> {
        let find = |part: &str, shape: (usize, usize)| {
            let name = head_param(schema.task, part);
            let id = params
                .id(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks {name}")))?;
            if params.get(id).dim() != shape {
                return Err(Error::Config(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    params.get(id).dim()
                )));
            }
            Ok(id)
        };
        let c = schema.len();
        Ok(Head {
            config: HeadConfig {
                task: schema.task,
                num_classes: c,
            },
            labels: schema.labels().to_vec(),
            weight: find("weight", (c, hidden_dim))?,
            bias: find("bias", (1, c))?,
        })
    }

    pub fn task(&self) -> TaskId {
        self.config.task
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn bias_id(&self) -> ParamId {
        self.bias
    }

    pub fn input_dim(&self, params: &ParamStore) -> usize {
        params.get(self.weight).ncols()
    }

    pub fn logits(&self, g: &mut Graph, pooled: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.linear(pooled, w, b)
    }

    /// Softmax probabilities for each pooled row.
    pub fn probabilities(&self, params: &ParamStore, pooled: &Matrix) -> Result<Matrix> {
        let w = params.get(self.weight);
        if pooled.ncols() != w.ncols() {
            return Err(Error::Config(format!(
                "{} head expects {}-dimensional inputs, got {}",
                self.task(),
                w.ncols(),
                pooled.ncols()
            )));
        }
        let logits = pooled.dot(&w.t()) + params.get(self.bias);
        Ok(softmax_rows(&logits))
    }
}

/// Probability vector per batch row from one head.
pub fn forward_single(batch: &EncodedBatch, head: &Head, params: &ParamStore) -> Result<Vec<Vec<f64>>> {
    let probs = head.probabilities(params, &batch.vectors)?;
    Ok(probs.rows().into_iter().map(|r| r.to_vec()).collect())
}

/// Per-sample triples from three heads, in type / severity / target order.
pub fn forward_multitask(
    batch: &EncodedBatch,
    heads: &[Head],
    params: &ParamStore,
) -> Result<Vec<MultitaskPrediction>> {
    let mut by_task: PerTask<Option<Vec<Vec<f64>>>> = PerTask::default();
    for h in heads {
        by_task[h.task()] = Some(forward_single(batch, h, params)?);
    }
    let take = |t: TaskId, v: &mut PerTask<Option<Vec<Vec<f64>>>>| {
        v[t].take()
            .ok_or_else(|| Error::Config(format!("multitask forward needs a {t} head")))
    };
    let types = take(TaskId::Type, &mut by_task)?;
    let sevs = take(TaskId::Severity, &mut by_task)?;
    let targets = take(TaskId::Target, &mut by_task)?;
    Ok(types
        .into_iter()
        .zip(sevs)
        .zip(targets)
        .map(|((t, s), g)| MultitaskPrediction {
            type_probs: t,
            severity_probs: s,
            target_probs: g,
        })
        .collect())
}

/// Mean of `-ln p[gold]` over rows.
pub fn cross_entropy(probs: &[&[f64]], gold: &[usize]) -> Result<f64> {
    if probs.len() != gold.len() || probs.is_empty() {
        return Err(Error::Validation(format!(
            "cross-entropy over {} predictions and {} gold labels",
            probs.len(),
            gold.len()
        )));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(gold) {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::Validation(format!("gold index {y} outside {} classes", p.len())))?;
        total -= py.ln();
    }
    Ok(total / gold.len() as f64)
}

/// `α·CE_type + β·CE_severity + γ·CE_target`, each a batch mean.
pub fn mtl_loss(preds: &[MultitaskPrediction], gold: &[PerTask<Option<usize>>], w: &LossWeights) -> Result<f64> {
    w.validate()?;
    if preds.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} gold rows",
            preds.len(),
            gold.len()
        )));
    }
    let mut loss = 0.0;
    for task in TaskId::ALL {
        let labels = gold
            .iter()
            .enumerate()
            .map(|(i, g)| {
                g[task].ok_or_else(|| {
                    Error::Validation(format!(
                        "sample {i} has no {task} gold label; multitask loss needs all three"
                    ))
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        let probs: Vec<&[f64]> = preds.iter().map(|p| p.get(task)).collect();
        loss += w.get(task) * cross_entropy(&probs, &labels)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SEVERITY_LABELS, TYPE_LABELS};

    fn batch(rows: Vec<Vec<f64>>) -> EncodedBatch {
        let n = rows.len();
        let d = rows[0].len();
        let m = Matrix::from_shape_vec((n, d), rows.concat()).unwrap();
        EncodedBatch::new(m, vec![1; n]).unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let mut params = ParamStore::new();
        let head = Head::seeded(&LabelSchema::standard(TaskId::Type), 4, 0.0, 1, &mut params);
        let out = forward_single(&batch(vec![vec![0.3, -1.0, 2.0, 0.5]; 4]), &head, &params).unwrap();
        assert_eq!(out.len(), 4);
        for row in out {
            assert_eq!(row.len(), TYPE_LABELS.len());
            assert!(row.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
        }
    }

    #[test]
    fn head_rows_are_distributions() {
        let mut params = ParamStore::new();
        let head = Head::seeded(&LabelSchema::standard(TaskId::Type), 3, 0.5, 9, &mut params);
        let out = forward_single(
            &batch(vec![
                vec![1.0, 2.0, 3.0],
                vec![-4.0, 0.0, 1.0],
                vec![0.0; 3],
                vec![9.0, 9.0, -9.0],
            ]),
            &head,
            &params,
        )
        .unwrap();
        for row in out {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let wrong = batch(vec![vec![1.0, 2.0]]);
        assert!(matches!(forward_single(&wrong, &head, &params), Err(Error::Config(_))));
    }

    fn uniform(n: usize) -> Vec<MultitaskPrediction> {
        vec![
            MultitaskPrediction {
                type_probs: vec![1.0 / 6.0; 6],
                severity_probs: vec![1.0 / 3.0; 3],
                target_probs: vec![0.2; 5],
            };
            n
        ]
    }

    #[test]
    fn uniform_loss_is_sum_of_log_classes() {
        let gold = vec![
            PerTask::new(Some(0), Some(2), Some(4)),
            PerTask::new(Some(5), Some(1), Some(0)),
        ];
        let l = mtl_loss(&uniform(2), &gold, &LossWeights::default()).unwrap();
        let expected = 6f64.ln() + 3f64.ln() + 5f64.ln();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn missing_gold_is_an_error() {
        let gold = vec![PerTask::new(Some(0), None, Some(1))];
        assert!(mtl_loss(&uniform(1), &gold, &LossWeights::default()).is_err());
    }

    #[test]
    fn loss_weight_validation() {
        assert!(LossWeights::new(0.0, 0.0, 0.0).is_err());
        assert!(LossWeights::new(-1.0, 1.0, 1.0).is_err());
        assert!(LossWeights::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(LossWeights::new(1.0, 0.0, 0.0).is_ok());
    }

    #[test]
    fn mode_consistency() {
        let enc = EncoderConfig::toy(8);
        let mut single = ModelConfig::single("m", enc.clone(), TaskId::Severity, TrainingConfig::default());
        assert_eq!(single.mode().unwrap(), TaskMode::Single(TaskId::Severity));
        single.loss_weights = Some(LossWeights::default());
        assert!(single.validate().is_err());
        let mut multi = ModelConfig::multitask("m", enc, LossWeights::default(), TrainingConfig::default());
        assert_eq!(multi.mode().unwrap(), TaskMode::Multitask);
        assert_eq!(multi.heads[2].num_classes, 5);
        multi.heads[1].num_classes = SEVERITY_LABELS.len() + 1;
        assert!(matches!(multi.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn training_defaults() {
        let t = TrainingConfig::default();
        assert_eq!((t.learning_rate, t.batch_size, t.epochs), (2e-5, 16, 3));
        assert_eq!(t.weight_decay, 0.01);
        let parsed: TrainingConfig = toml::from_str("epochs = 5").unwrap();
        assert_eq!(parsed.epochs, 5);
        assert_eq!(parsed.learning_rate, 2e-5);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "x"), derive_seed(7, "x"));
    }
}
