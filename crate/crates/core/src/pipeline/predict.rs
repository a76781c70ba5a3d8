//! Thresholded prediction with the emerging-topic fallback.

use super::PipelineError;
use crate::fusion::{FusionModel, Model, ModelInput};
use crate::prediction::PredictionSet;
use crate::rulebook::TopicRuleSet;
use crate::training::LabeledSample;

fn check_threshold(tau: f64) -> Result<(), PipelineError> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(PipelineError::InvalidThreshold(tau))
    }
}

/// The 27 topic probabilities for one document.
pub fn predict_probabilities(
    model: &FusionModel,
    rules: &TopicRuleSet,
    doc_id: &str,
    text: &str,
) -> Result<Vec<f64>, PipelineError> {
    let token_ids = model.encoder.tokenize(text);
    let features = rules.tag(doc_id, text, model.config.cap);
    let input = ModelInput {
        doc_id,
        token_ids: &token_ids,
        features: &features,
    };
    Ok(model.predict_proba(&input)?)
}

pub fn scores_to_prediction(
    rules: &TopicRuleSet,
    doc_id: &str,
    probs: &[f64],
    tau: f64,
) -> PredictionSet {
    PredictionSet::from_scores(doc_id, rules.names().zip(probs.iter().copied()), tau)
}

/// Tags, encodes, fuses and classifies `text`, keeping topics with
/// probability at least `tau`. The rules-only model reports every fired
/// rule with probability 1.
pub fn predict(
    model: &Model,
    rules: &TopicRuleSet,
    doc_id: &str,
    text: &str,
    tau: f64,
) -> Result<PredictionSet, PipelineError> {
    check_threshold(tau)?;
    match model {
        Model::RulesOnly => Ok(rules.classify_rules_only(doc_id, text)),
        Model::Fusion(m) => {
            let probs = predict_probabilities(m, rules, doc_id, text)?;
            Ok(scores_to_prediction(rules, doc_id, &probs, tau))
        }
    }
}

pub fn predict_batch(
    model: &Model,
    rules: &TopicRuleSet,
    samples: &[LabeledSample],
    tau: f64,
) -> Result<Vec<PredictionSet>, PipelineError> {
    samples
        .iter()
        .map(|s| predict(model, rules, &s.doc_id, &s.text, tau))
        .collect()
}
