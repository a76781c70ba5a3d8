//! Train and compare the five variants on one shared split, and sweep the
//! decision threshold of a trained model.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::predict::{predict_batch, predict_probabilities, scores_to_prediction};
use super::{save_model, PipelineError};
use crate::encoder::{EncoderConfig, PrecomputedEncoder, Vocabulary};
use crate::evaluation::{comparison_report, evaluate, ComparisonReport, EvalReport};
use crate::fusion::{assemble_model, EncoderSetup, FusionConfig, Model, Variant};
use crate::prediction::PredictionSet;
use crate::rulebook::TopicRuleSet;
use crate::training::{split_dataset, train, LabeledSample, TrainConfig, TrainError, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Drives the split, parameter initialisation and batch order.
    pub seed: u64,
    pub train_ratio: f64,
    pub threshold: f64,
    /// Minimum token count for the mini encoder's vocabulary.
    pub min_freq: usize,
    pub encoder: EncoderConfig,
    pub fusion: FusionConfig,
    pub train: TrainConfig,
    pub variants: Vec<Variant>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            seed: 7,
            train_ratio: 0.7,
            threshold: 0.5,
            min_freq: 1,
            encoder: EncoderConfig {
                d_model: 64,
                max_seq_len: 64,
                layers: 1,
                heads: 4,
                block: Default::default(),
            },
            fusion: FusionConfig::default(),
            train: TrainConfig {
                lr: 3e-3,
                max_epochs: 60,
                patience: Some(10),
                ..TrainConfig::default()
            },
            variants: Variant::ALL.to_vec(),
        }
    }
}

/// The serializable part of an ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Test documents on which at least one rule fires.
    pub regex_classifiable: usize,
    /// Test documents tagged only with the no-topic sentinel.
    pub not_regex_classifiable: usize,
    pub comparison: ComparisonReport,
}

#[derive(Debug)]
pub struct AblationOutcome {
    pub summary: AblationSummary,
    pub evals: BTreeMap<Variant, EvalReport>,
    pub histories: BTreeMap<Variant, TrainHistory>,
    pub models: BTreeMap<Variant, Model>,
}

fn encoder_setup(
    cfg: &AblationConfig,
    train_set: &[LabeledSample],
    vectors: Option<&PrecomputedEncoder>,
) -> Result<EncoderSetup, PipelineError> {
    Ok(match vectors {
        Some(v) => EncoderSetup::Precomputed(v.clone()),
        None => {
            let texts: Vec<&str> = train_set.iter().map(|s| s.text.as_str()).collect();
            EncoderSetup::Mini {
                config: cfg.encoder,
                vocab: Vocabulary::build(&texts, cfg.min_freq)?,
            }
        }
    })
}

/// Splits once, trains every learned variant on the training part and
/// evaluates all requested variants on the shared test part.
pub fn run_ablation(
    dataset: &[LabeledSample],
    rules: &TopicRuleSet,
    cfg: &AblationConfig,
    vectors: Option<&PrecomputedEncoder>,
) -> Result<AblationOutcome, PipelineError> {
    let (train_set, test_set) = split_dataset(dataset, cfg.train_ratio, cfg.seed)?;
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        threshold: cfg.threshold,
        ..cfg.train.clone()
    };
    if cfg.variants.iter().any(|&v| v != Variant::RulesOnly)
        && train_set.len() < train_cfg.batch_size
    {
        return Err(TrainError::TooFewSamples {
            needed: train_cfg.batch_size,
            found: train_set.len(),
        }
        .into());
    }
    let gold: Vec<(String, BTreeSet<String>)> = test_set
        .iter()
        .map(|s| (s.doc_id.clone(), s.labels.clone()))
        .collect();
    let not_regex = test_set
        .iter()
        .filter(|s| rules.tag(&s.doc_id, &s.text, cfg.fusion.cap).is_no_topic())
        .count();

    let mut evals = BTreeMap::new();
    let mut histories = BTreeMap::new();
    let mut models = BTreeMap::new();
    let variants: BTreeSet<Variant> = cfg.variants.iter().copied().collect();
    for variant in variants {
        let setup = encoder_setup(cfg, &train_set, vectors)?;
        let mut model = assemble_model(variant.number(), &cfg.fusion, setup, cfg.seed)?;
        if let Model::Fusion(m) = &mut model {
            histories.insert(variant, train(m, rules, &train_set, &train_cfg)?);
        }
        let preds = predict_batch(&model, rules, &test_set, cfg.threshold)?;
        evals.insert(
            variant,
            evaluate(variant, cfg.threshold, &preds, &gold, rules)?,
        );
        models.insert(variant, model);
    }
    let comparison = comparison_report(&evals)?;
    Ok(AblationOutcome {
        summary: AblationSummary {
            seed: cfg.seed,
            train_size: train_set.len(),
            test_size: test_set.len(),
            regex_classifiable: test_set.len() - not_regex,
            not_regex_classifiable: not_regex,
            comparison,
        },
        evals,
        histories,
        models,
    })
}

impl AblationOutcome {
    pub fn f1(&self, variant: Variant) -> Option<f64> {
        self.evals.get(&variant).map(|r| r.weighted.f1)
    }

    /// Writes `report.json`, `report.txt`, and per variant `eval_<n>.json`,
    /// `history_<n>.json` and a `model_<n>/` directory.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&self.summary)? + "\n",
        )?;
        let mut text = self.summary.comparison.to_text();
        text.push_str(&format!(
            "\ntest documents tagged by at least one rule: {}\ntest documents with no rule match: {}\n",
            self.summary.regex_classifiable, self.summary.not_regex_classifiable
        ));
        fs::write(dir.join("report.txt"), text)?;
        for (v, report) in &self.evals {
            fs::write(
                dir.join(format!("eval_{}.json", v.number())),
                serde_json::to_string_pretty(report)? + "\n",
            )?;
        }
        for (v, h) in &self.histories {
            fs::write(
                dir.join(format!("history_{}.json", v.number())),
                serde_json::to_string_pretty(h)? + "\n",
            )?;
        }
        for (v, m) in &self.models {
            save_model(
                m,
                self.summary.seed,
                dir.join(format!("model_{}", v.number())),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub emerging_rate: f64,
}

/// Weighted metrics and emerging rate at each threshold. Probabilities are
/// computed once per document.
pub fn sweep_threshold(
    model: &Model,
    rules: &TopicRuleSet,
    samples: &[LabeledSample],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, PipelineError> {
    let gold: Vec<(String, BTreeSet<String>)> = samples
        .iter()
        .map(|s| (s.doc_id.clone(), s.labels.clone()))
        .collect();
    let probs: Option<Vec<Vec<f64>>> = match model {
        Model::RulesOnly => None,
        Model::Fusion(m) => Some(
            samples
                .iter()
                .map(|s| predict_probabilities(m, rules, &s.doc_id, &s.text))
                .collect::<Result<_, _>>()?,
        ),
    };
    thresholds
        .iter()
        .map(|&tau| {
            if !(0.0..=1.0).contains(&tau) {
                return Err(PipelineError::InvalidThreshold(tau));
            }
            let preds: Vec<PredictionSet> = match &probs {
                None => predict_batch(model, rules, samples, tau)?,
                Some(p) => samples
                    .iter()
                    .zip(p)
                    .map(|(s, p)| scores_to_prediction(rules, &s.doc_id, p, tau))
                    .collect(),
            };
            let r = evaluate(model.variant(), tau, &preds, &gold, rules)?;
            Ok(SweepPoint {
                threshold: tau,
                precision: r.weighted.precision,
                recall: r.weighted.recall,
                f1: r.weighted.f1,
                emerging_rate: r.emerging_rate,
            })
        })
        .collect()
}
