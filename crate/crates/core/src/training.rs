//! Dataset splitting and the mini-batch training loop.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{FusionError, FusionModel, ModelInput};
use crate::numerics::{
    bce_with_logits, bce_with_logits_grad, AdamWConfig, AdamWState, NumericsError, Tensor2,
};
use crate::rulebook::{RegexFeatureVector, TopicRuleSet, TOPIC_COUNT};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("train ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("unknown topic label {0:?}")]
    UnknownLabel(String),
    #[error("need at least {needed} training samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One annotated document. Serialized with the dataset's field names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSample {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
    pub labels: BTreeSet<String>,
}

impl LabeledSample {
    pub fn new<I, S>(doc_id: impl Into<String>, text: impl Into<String>, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LabeledSample {
            doc_id: doc_id.into(),
            text: text.into(),
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Share of the training set held out for validation. Zero monitors the
    /// training set itself.
    pub val_fraction: f64,
    pub seed: u64,
    pub threshold: f64,
    /// Epochs without validation improvement before stopping; `None` runs
    /// every epoch.
    pub patience: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        TrainConfig {
            lr: adam.lr,
            batch_size: 8,
            max_epochs: 30,
            val_fraction: 0.15,
            seed: 0,
            threshold: 0.5,
            patience: Some(5),
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
        }
    }
}

impl TrainConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(0.0..0.5).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 0.5)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1 when set");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Wall-clock time per epoch. Left out of the JSON form so that
    /// histories from identical runs compare byte for byte.
    #[serde(skip)]
    pub epoch_seconds: Vec<f64>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

/// Seeded shuffle followed by a cut at `round(n * train_ratio)`.
pub fn split_dataset<T: Clone>(
    ds: &[T],
    train_ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(TrainError::InvalidRatio(train_ratio));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (ds.len() as f64 * train_ratio).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| ds[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}

pub fn target_row(sample: &LabeledSample, rules: &TopicRuleSet) -> Result<Vec<f64>, TrainError> {
    let mut row = vec![0.0; TOPIC_COUNT];
    for label in &sample.labels {
        let id = rules
            .id_of(label)
            .ok_or_else(|| TrainError::UnknownLabel(label.clone()))?;
        row[id] = 1.0;
    }
    Ok(row)
}

/// `n x 27` multi-hot matrix of gold labels.
pub fn make_target_matrix(
    samples: &[LabeledSample],
    rules: &TopicRuleSet,
) -> Result<Tensor2, TrainError> {
    let mut data = Vec::with_capacity(samples.len() * TOPIC_COUNT);
    for s in samples {
        data.extend(target_row(s, rules)?);
    }
    Ok(Tensor2::from_vec(samples.len(), TOPIC_COUNT, data)?)
}

/// A sample with its token ids, regex features and target row computed once.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub doc_id: String,
    pub token_ids: Vec<usize>,
    pub features: RegexFeatureVector,
    pub target: Vec<f64>,
}

impl PreparedSample {
    pub fn input(&self) -> ModelInput<'_> {
        ModelInput {
            doc_id: &self.doc_id,
            token_ids: &self.token_ids,
            features: &self.features,
        }
    }
}

pub fn prepare(
    model: &FusionModel,
    rules: &TopicRuleSet,
    samples: &[LabeledSample],
) -> Result<Vec<PreparedSample>, TrainError> {
    samples
        .iter()
        .map(|s| {
            Ok(PreparedSample {
                doc_id: s.doc_id.clone(),
                token_ids: model.encoder.tokenize(&s.text),
                features: rules.tag(&s.doc_id, &s.text, model.config.cap),
                target: target_row(s, rules)?,
            })
        })
        .collect()
}

fn stack_targets(batch: &[&PreparedSample]) -> Tensor2 {
    let data = batch
        .iter()
        .flat_map(|s| s.target.iter().copied())
        .collect();
    Tensor2::from_vec(batch.len(), TOPIC_COUNT, data).expect("target rows have 27 columns")
}

/// Mean BCE over every cell of `samples` without touching gradients.
pub fn dataset_loss(model: &FusionModel, samples: &[PreparedSample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut logits = Tensor2::zeros(samples.len(), TOPIC_COUNT);
    for (i, s) in samples.iter().enumerate() {
        let (l, _) = model.forward(&s.input())?;
        logits.row_mut(i).copy_from_slice(l.row(0));
    }
    let refs: Vec<&PreparedSample> = samples.iter().collect();
    Ok(bce_with_logits(&logits, &stack_targets(&refs))?)
}

/// Forward, loss and backward for one mini-batch. Gradients accumulate into
/// the model's store; the caller applies the optimizer step.
fn batch_step(model: &mut FusionModel, batch: &[&PreparedSample]) -> Result<f64, TrainError> {
    let mut logits = Tensor2::zeros(batch.len(), TOPIC_COUNT);
    let mut traces = Vec::with_capacity(batch.len());
    for (i, s) in batch.iter().enumerate() {
        let (l, trace) = model.forward(&s.input())?;
        logits.row_mut(i).copy_from_slice(l.row(0));
        traces.push(trace);
    }
    let targets = stack_targets(batch);
    let loss = bce_with_logits(&logits, &targets)?;
    if !loss.is_finite() {
        return Ok(loss);
    }
    let grad = bce_with_logits_grad(&logits, &targets)?;
    for (i, trace) in traces.iter().enumerate().rev() {
        model.backward(trace, &grad.row_block(i, 1))?;
    }
    Ok(loss)
}

/// Trains `model` in place and leaves it holding the parameters of the epoch
/// with the lowest validation loss.
///
/// The validation set is the last `val_fraction` of a seeded shuffle of
/// `samples`; with `val_fraction == 0` the training set is monitored.
pub fn train(
    model: &mut FusionModel,
    rules: &TopicRuleSet,
    samples: &[LabeledSample],
    cfg: &TrainConfig,
) -> Result<TrainHistory, TrainError> {
    cfg.validate()?;
    if samples.len() < cfg.batch_size {
        return Err(TrainError::TooFewSamples {
            needed: cfg.batch_size,
            found: samples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut prepared = prepare(model, rules, samples)?;
    prepared.shuffle(&mut rng);
    let n_val = (samples.len() as f64 * cfg.val_fraction).round() as usize;
    let (train_set, val_set) = if n_val == 0 {
        (prepared, Vec::new())
    } else {
        let val = prepared.split_off(prepared.len() - n_val);
        (prepared, val)
    };
    let monitor: &[PreparedSample] = if val_set.is_empty() {
        &train_set
    } else {
        &val_set
    };

    let mut optimizer = AdamWState::new(&model.params, cfg.adamw());
    let mut history = TrainHistory {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        epoch_seconds: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Vec<Tensor2>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            model.params.zero_grads();
            let loss = batch_step(model, &batch)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            optimizer.step(&mut model.params)?;
            weighted += loss * batch.len() as f64;
        }
        let val_loss = dataset_loss(model, monitor)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
            });
        }
        history.train_loss.push(weighted / train_set.len() as f64);
        history.val_loss.push(val_loss);
        history.epoch_seconds.push(started.elapsed().as_secs_f64());

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params.snapshot()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    if let Some((_, snapshot)) = best {
        model.params.restore(&snapshot)?;
    }
    model.params.zero_grads();
    Ok(history)
}
