//! Python bindings: rulebook tagging, metrics, synthetic corpora, training,
//! prediction and the ablation driver.
//!
//! Documents cross the boundary as `(id, text, labels)` tuples.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use topicfuse::encoder::Vocabulary;
use topicfuse::evaluation::{
    label_ids, micro_metrics, per_class_counts, weighted_metrics, Averages,
};
use topicfuse::fusion::{assemble_model, EncoderSetup, Model};
use topicfuse::pipeline::{self, AblationConfig, CorpusConfig, PipelineError};
use topicfuse::rulebook::{DEFAULT_CAP, TOPIC_COUNT};
use topicfuse::training::{train, LabeledSample};
use topicfuse::TopicRuleSet;

type Doc = (String, String, Vec<String>);

fn py_err(e: impl Into<PipelineError>) -> PyErr {
    let e = e.into();
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_samples(docs: Vec<Doc>) -> Vec<LabeledSample> {
    docs.into_iter()
        .map(|(id, text, labels)| LabeledSample::new(id, text, labels))
        .collect()
}

fn from_samples(samples: Vec<LabeledSample>) -> Vec<Doc> {
    samples
        .into_iter()
        .map(|s| (s.doc_id, s.text, s.labels.into_iter().collect()))
        .collect()
}

fn parse_config(json: Option<&str>) -> PyResult<AblationConfig> {
    match json {
        None => Ok(AblationConfig::default()),
        Some(s) => {
            serde_json::from_str(s).map_err(|e| PyValueError::new_err(format!("config: {e}")))
        }
    }
}

/// A compiled rulebook.
#[pyclass(name = "RuleSet", frozen)]
struct PyRuleSet {
    inner: TopicRuleSet,
}

#[pymethods]
impl PyRuleSet {
    /// The bundled 27-topic rulebook.
    #[staticmethod]
    fn reference() -> Self {
        PyRuleSet {
            inner: TopicRuleSet::reference(),
        }
    }

    /// Parses `id<TAB>name<TAB>pattern` lines.
    #[staticmethod]
    fn parse(source: &str) -> PyResult<Self> {
        Ok(PyRuleSet {
            inner: TopicRuleSet::parse(source).map_err(py_err)?,
        })
    }

    fn names(&self) -> Vec<String> {
        self.inner.names().map(str::to_string).collect()
    }

    /// Fired rule ids, capped; `[27]` when nothing fires.
    #[pyo3(signature = (text, cap = DEFAULT_CAP))]
    fn tag(&self, text: &str, cap: usize) -> PyResult<Vec<usize>> {
        if cap == 0 {
            return Err(PyValueError::new_err("cap must be at least 1"));
        }
        Ok(self.inner.tag("", text, cap).feature_ids)
    }

    /// Topic names from the rules alone; `["Emerging Topic"]` when none fire.
    fn classify(&self, text: &str) -> Vec<String> {
        self.inner
            .classify_rules_only("", text)
            .labels()
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.rules().len()
    }
}

/// `(y - x) / x`.
#[pyfunction]
fn relative_improvement(x: f64, y: f64) -> PyResult<f64> {
    topicfuse::evaluation::relative_improvement(x, y).map_err(py_err)
}

fn averages_dict(a: Averages) -> std::collections::BTreeMap<&'static str, f64> {
    [
        ("precision", a.precision),
        ("recall", a.recall),
        ("f1", a.f1),
    ]
    .into_iter()
    .collect()
}

/// Support-weighted and micro precision/recall/F1 over aligned label lists.
/// Returns `(weighted, micro)` dictionaries.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn metrics(
    predicted: Vec<Vec<String>>,
    gold: Vec<Vec<String>>,
) -> PyResult<(
    std::collections::BTreeMap<&'static str, f64>,
    std::collections::BTreeMap<&'static str, f64>,
)> {
    let rules = TopicRuleSet::reference();
    let ids = |sets: &[Vec<String>]| -> PyResult<Vec<BTreeSet<usize>>> {
        sets.iter()
            .map(|s| label_ids(s, &rules).map_err(py_err))
            .collect()
    };
    let (p, g) = (ids(&predicted)?, ids(&gold)?);
    let per = (0..TOPIC_COUNT)
        .map(|k| per_class_counts(&p, &g, k))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    let weighted = weighted_metrics(&per).map_err(py_err)?;
    Ok((averages_dict(weighted), averages_dict(micro_metrics(&per))))
}

/// Seeded synthetic corpus of `(id, text, labels)` tuples.
#[pyfunction]
#[pyo3(signature = (size = 400, seed = 7, paraphrase_fraction = 0.25))]
fn generate_corpus(size: usize, seed: u64, paraphrase_fraction: f64) -> PyResult<Vec<Doc>> {
    if !(0.0..=1.0).contains(&paraphrase_fraction) {
        return Err(PyValueError::new_err(
            "paraphrase_fraction must lie in [0, 1]",
        ));
    }
    let cfg = CorpusConfig {
        size,
        seed,
        paraphrase_fraction,
        ..CorpusConfig::default()
    };
    Ok(from_samples(pipeline::generate_corpus(
        &cfg,
        &TopicRuleSet::reference(),
    )))
}

/// Unlabelled documents drawn from none of the topic generators.
#[pyfunction]
#[pyo3(signature = (n, seed = 7))]
fn generate_off_topic(n: usize, seed: u64) -> Vec<Doc> {
    from_samples(pipeline::generate_off_topic(n, seed))
}

/// A rules-only or trained fusion classifier.
#[pyclass(name = "Model")]
struct PyModel {
    model: Model,
    seed: u64,
    rules: TopicRuleSet,
}

#[pymethods]
impl PyModel {
    /// Trains `variant` (1-5) on `docs` with the mini text encoder. `config`
    /// is an optional JSON ablation config.
    #[staticmethod]
    #[pyo3(signature = (docs, variant = 5, config = None))]
    fn train(py: Python<'_>, docs: Vec<Doc>, variant: u8, config: Option<&str>) -> PyResult<Self> {
        let cfg = parse_config(config)?;
        let samples = to_samples(docs);
        let rules = TopicRuleSet::reference();
        let model = py.detach(|| -> Result<Model, PipelineError> {
            let texts: Vec<&str> = samples.iter().map(|s| s.text.as_str()).collect();
            let setup = EncoderSetup::Mini {
                config: cfg.encoder,
                vocab: Vocabulary::build(&texts, cfg.min_freq)?,
            };
            let mut model = assemble_model(variant, &cfg.fusion, setup, cfg.seed)?;
            if let Model::Fusion(m) = &mut model {
                let train_cfg = topicfuse::training::TrainConfig {
                    seed: cfg.seed,
                    threshold: cfg.threshold,
                    ..cfg.train.clone()
                };
                train(m, &rules, &samples, &train_cfg)?;
            }
            Ok(model)
        });
        Ok(PyModel {
            model: model.map_err(py_err)?,
            seed: cfg.seed,
            rules,
        })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        let (model, manifest) = pipeline::load_model(dir, None).map_err(py_err)?;
        Ok(PyModel {
            model,
            seed: manifest.seed,
            rules: TopicRuleSet::reference(),
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        pipeline::save_model(&self.model, self.seed, dir).map_err(py_err)
    }

    #[getter]
    fn variant(&self) -> u8 {
        self.model.variant().number()
    }

    /// `(topics, is_emerging)` where topics is a list of `(name, probability)`.
    #[pyo3(signature = (text, threshold = 0.5))]
    fn predict(&self, text: &str, threshold: f64) -> PyResult<(Vec<(String, f64)>, bool)> {
        let p =
            pipeline::predict(&self.model, &self.rules, "doc", text, threshold).map_err(py_err)?;
        Ok((
            p.topics
                .into_iter()
                .map(|t| (t.name, t.probability))
                .collect(),
            p.is_emerging,
        ))
    }

    /// All 27 sigmoid outputs of a learned model.
    fn probabilities(&self, text: &str) -> PyResult<Vec<f64>> {
        match &self.model {
            Model::Fusion(m) => {
                pipeline::predict_probabilities(m, &self.rules, "doc", text).map_err(py_err)
            }
            Model::RulesOnly => Err(PyValueError::new_err(
                "the rules-only model has no probabilities",
            )),
        }
    }
}

/// Trains and compares the five variants on one split; returns the summary
/// as a JSON string.
#[pyfunction]
#[pyo3(signature = (docs, config = None))]
fn run_ablation(py: Python<'_>, docs: Vec<Doc>, config: Option<&str>) -> PyResult<String> {
    let cfg = parse_config(config)?;
    let samples = to_samples(docs);
    let rules = TopicRuleSet::reference();
    let out = py
        .detach(|| pipeline::run_ablation(&samples, &rules, &cfg, None))
        .map_err(py_err)?;
    serde_json::to_string(&out.summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn topicfuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRuleSet>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(relative_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(generate_off_topic, m)?)?;
    m.add_function(wrap_pyfunction!(run_ablation, m)?)?;
    m.add("EMERGING_TOPIC", topicfuse::EMERGING_TOPIC)?;
    Ok(())
}
