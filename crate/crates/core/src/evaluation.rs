//! Per-class and support-weighted metrics, relative improvements and the
//! cross-variant comparison table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::Variant;
use crate::prediction::PredictionSet;
use crate::rulebook::{TopicRuleSet, TOPIC_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{pred} predictions for {gold} gold label sets")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("prediction {index} is for {pred:?} but gold is for {gold:?}")]
    DocMismatch {
        index: usize,
        pred: String,
        gold: String,
    },
    #[error("no class has gold support")]
    ZeroTotalSupport,
    #[error("relative improvement over a zero baseline")]
    DivisionByZero,
    #[error("variants were evaluated on different test documents")]
    InconsistentTestSets,
    #[error("no reports to compare")]
    EmptyComparison,
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    pub fn from_counts(class_id: usize, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if tp == 0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            class_id,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

/// Confusion counts for one class over aligned predicted and gold id sets.
pub fn per_class_counts(
    pred: &[BTreeSet<usize>],
    gold: &[BTreeSet<usize>],
    class_id: usize,
) -> Result<ClassMetrics, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        match (p.contains(&class_id), g.contains(&class_id)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(ClassMetrics::from_counts(class_id, tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Support-weighted precision, recall and F1.
pub fn weighted_metrics(per_class: &[ClassMetrics]) -> Result<Averages, EvalError> {
    let total: usize = per_class.iter().map(|c| c.support).sum();
    if total == 0 {
        return Err(EvalError::ZeroTotalSupport);
    }
    // Sum support-scaled scores and divide once, so all-perfect classes give exactly 1.
    let mut out = Averages::default();
    for c in per_class {
        let s = c.support as f64;
        out.precision += s * c.precision;
        out.recall += s * c.recall;
        out.f1 += s * c.f1;
    }
    let t = total as f64;
    Ok(Averages {
        precision: out.precision / t,
        recall: out.recall / t,
        f1: out.f1 / t,
    })
}

/// Micro-averaged precision, recall and F1 from pooled counts.
pub fn micro_metrics(per_class: &[ClassMetrics]) -> Averages {
    let tp: usize = per_class.iter().map(|c| c.tp).sum();
    let fp: usize = per_class.iter().map(|c| c.fp).sum();
    let fn_: usize = per_class.iter().map(|c| c.fn_).sum();
    let m = ClassMetrics::from_counts(usize::MAX, tp, fp, fn_);
    Averages {
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
    }
}

/// `(y - x) / x`.
pub fn relative_improvement(score_x: f64, score_y: f64) -> Result<f64, EvalError> {
    if score_x == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok((score_y - score_x) / score_x)
}

/// Topic ids a prediction asserts. Emerging predictions assert none.
pub fn predicted_ids(
    pred: &PredictionSet,
    rules: &TopicRuleSet,
) -> Result<BTreeSet<usize>, EvalError> {
    if pred.is_emerging {
        return Ok(BTreeSet::new());
    }
    pred.topics
        .iter()
        .map(|t| {
            rules
                .id_of(&t.name)
                .ok_or_else(|| EvalError::UnknownTopic(t.name.clone()))
        })
        .collect()
}

pub fn label_ids<'a, I>(labels: I, rules: &TopicRuleSet) -> Result<BTreeSet<usize>, EvalError>
where
    I: IntoIterator<Item = &'a String>,
{
    labels
        .into_iter()
        .map(|l| {
            rules
                .id_of(l)
                .ok_or_else(|| EvalError::UnknownTopic(l.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub id: usize,
    pub name: String,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub threshold: f64,
    pub n: usize,
    pub weighted: Averages,
    pub micro: Averages,
    pub per_class: Vec<ClassReport>,
    pub emerging_rate: f64,
    /// Test documents in evaluation order; used to check that compared
    /// reports share a test set.
    #[serde(skip)]
    pub doc_ids: Vec<String>,
}

/// Scores aligned predictions against gold `(doc_id, labels)` pairs.
pub fn evaluate(
    variant: Variant,
    threshold: f64,
    predictions: &[PredictionSet],
    gold: &[(String, BTreeSet<String>)],
    rules: &TopicRuleSet,
) -> Result<EvalReport, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            pred: predictions.len(),
            gold: gold.len(),
        });
    }
    let mut pred_ids = Vec::with_capacity(gold.len());
    let mut gold_ids = Vec::with_capacity(gold.len());
    for (index, (p, (doc_id, labels))) in predictions.iter().zip(gold).enumerate() {
        if &p.doc_id != doc_id {
            return Err(EvalError::DocMismatch {
                index,
                pred: p.doc_id.clone(),
                gold: doc_id.clone(),
            });
        }
        pred_ids.push(predicted_ids(p, rules)?);
        gold_ids.push(label_ids(labels, rules)?);
    }
    let per_class = (0..TOPIC_COUNT)
        .map(|k| per_class_counts(&pred_ids, &gold_ids, k))
        .collect::<Result<Vec<_>, _>>()?;
    let weighted = weighted_metrics(&per_class)?;
    let micro = micro_metrics(&per_class);
    let emerging = predictions.iter().filter(|p| p.is_emerging).count();
    Ok(EvalReport {
        variant,
        threshold,
        n: predictions.len(),
        weighted,
        micro,
        per_class: per_class
            .iter()
            .map(|c| ClassReport {
                id: c.class_id,
                name: rules.name(c.class_id).unwrap_or_default().to_string(),
                support: c.support,
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
            })
            .collect(),
        emerging_rate: ratio(emerging, predictions.len()),
        doc_ids: predictions.iter().map(|p| p.doc_id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub text_input: String,
    pub regex_input: String,
    pub fusion_layer: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub emerging_rate: f64,
}

/// Improvement of `model` over `baseline`; `None` where the baseline is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub baseline: Variant,
    pub model: Variant,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n: usize,
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub improvements: Vec<Improvement>,
}

pub fn comparison_report(
    results: &BTreeMap<Variant, EvalReport>,
) -> Result<ComparisonReport, EvalError> {
    let first = results.values().next().ok_or(EvalError::EmptyComparison)?;
    let docs: BTreeSet<&String> = first.doc_ids.iter().collect();
    for r in results.values() {
        if r.doc_ids.len() != first.doc_ids.len()
            || r.doc_ids.iter().collect::<BTreeSet<_>>() != docs
        {
            return Err(EvalError::InconsistentTestSets);
        }
    }
    let rows: Vec<ComparisonRow> = results
        .values()
        .map(|r| ComparisonRow {
            variant: r.variant,
            text_input: r.variant.text_channel().to_string(),
            regex_input: r.variant.regex_channel().to_string(),
            fusion_layer: r.variant.fusion_name().to_string(),
            precision: r.weighted.precision,
            recall: r.weighted.recall,
            f1: r.weighted.f1,
            micro_precision: r.micro.precision,
            micro_recall: r.micro.recall,
            emerging_rate: r.emerging_rate,
        })
        .collect();
    let mut improvements = Vec::new();
    for (i, base) in rows.iter().enumerate() {
        for model in &rows[i + 1..] {
            improvements.push(Improvement {
                baseline: base.variant,
                model: model.variant,
                precision: relative_improvement(base.precision, model.precision).ok(),
                recall: relative_improvement(base.recall, model.recall).ok(),
                f1: relative_improvement(base.f1, model.f1).ok(),
            });
        }
    }
    Ok(ComparisonReport {
        n: first.n,
        threshold: first.threshold,
        rows,
        improvements,
    })
}

impl ComparisonReport {
    /// Fixed-width table followed by the improvement block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "test documents: {}   threshold: {}",
            self.n, self.threshold
        );
        let _ = writeln!(
            out,
            "{:<6} {:<12} {:<23} {:<14} {:>9} {:>9} {:>9} {:>9}",
            "model", "text", "regex", "fusion", "precision", "recall", "f1", "emerging"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<6} {:<12} {:<23} {:<14} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
                r.variant.number(),
                r.text_input,
                r.regex_input,
                r.fusion_layer,
                r.precision,
                r.recall,
                r.f1,
                r.emerging_rate
            );
        }
        if !self.improvements.is_empty() {
            let _ = writeln!(out, "\nrelative improvement (model over baseline)");
            let pct =
                |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{:+.2}%", 100.0 * x));
            for imp in &self.improvements {
                let _ = writeln!(
                    out,
                    "  {} over {}: precision {:>9}  recall {:>9}  f1 {:>9}",
                    imp.model.number(),
                    imp.baseline.number(),
                    pct(imp.precision),
                    pct(imp.recall),
                    pct(imp.f1)
                );
            }
        }
        out
    }
}
