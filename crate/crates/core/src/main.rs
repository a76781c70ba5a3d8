use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use topicfuse::encoder::{PrecomputedEncoder, Vocabulary};
use topicfuse::evaluation::evaluate;
use topicfuse::fusion::{assemble_model, EncoderSetup, Model};
use topicfuse::pipeline::{
    export_bulk, generate_corpus, generate_off_topic, ingest, load_model, predict, predict_batch,
    run_ablation, save_model, sweep_threshold, write_jsonl, AblationConfig, CorpusConfig,
    PipelineError,
};
use topicfuse::rulebook::TopicRuleSet;
use topicfuse::training::{train, LabeledSample};

#[derive(Parser)]
#[command(
    name = "topicfuse",
    version,
    about = "Topic classification with fused regex and text features"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=5))]
    variant: Option<u8>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    d_model: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Tab-separated rulebook (`id<TAB>name<TAB>pattern`); defaults to the bundled one.
    #[arg(long, global = true)]
    rulebook: Option<PathBuf>,
    /// JSON-lines `{"id", "vector"}` file of precomputed text vectors.
    #[arg(long, global = true)]
    vectors: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the rule features of each document or of a single text.
    Tag(Source),
    /// Train one variant on a dataset and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model against a labelled dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Thresholded predictions as JSON lines.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        source: Source,
    },
    /// Train and compare all variants on one split.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict and write a bulk-index file.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Weighted F1 and emerging rate across thresholds.
    SweepThreshold {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
    /// Write a synthetic labelled corpus.
    GenCorpus {
        #[arg(long, default_value_t = 400)]
        size: usize,
        #[arg(long)]
        paraphrase_fraction: Option<f64>,
        /// Generate unlabelled off-topic documents instead.
        #[arg(long)]
        off_topic: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "text")]
    data: Option<PathBuf>,
    #[arg(long)]
    text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    variant: Option<u8>,
    #[serde(flatten)]
    run: AblationConfig,
}

struct Settings {
    variant: u8,
    run: AblationConfig,
    rules: TopicRuleSet,
    vectors: Option<PrecomputedEncoder>,
}

impl Settings {
    fn resolve(c: &Common) -> Result<Self, PipelineError> {
        let file = match &c.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| missing(p, e))?;
                serde_json::from_str::<FileConfig>(&text).map_err(|e| {
                    PipelineError::MalformedLine {
                        line: e.line(),
                        reason: e.to_string(),
                    }
                })?
            }
            None => FileConfig::default(),
        };
        let mut run = file.run;
        if let Some(s) = c.seed {
            run.seed = s;
        }
        if let Some(t) = c.threshold {
            run.threshold = t;
        }
        if let Some(d) = c.d_model {
            run.encoder.d_model = d;
        }
        if let Some(e) = c.epochs {
            run.train.max_epochs = e;
        }
        if let Some(lr) = c.lr {
            run.train.lr = lr;
        }
        if let Some(b) = c.batch_size {
            run.train.batch_size = b;
        }
        if !(0.0..=1.0).contains(&run.threshold) {
            return Err(PipelineError::InvalidThreshold(run.threshold));
        }
        run.train.seed = run.seed;
        run.train.threshold = run.threshold;
        let rules = match &c.rulebook {
            Some(p) => TopicRuleSet::load(p)?,
            None => TopicRuleSet::reference(),
        };
        let vectors = match &c.vectors {
            Some(p) => Some(PrecomputedEncoder::load(p, run.encoder.d_model)?),
            None => None,
        };
        Ok(Settings {
            variant: c.variant.or(file.variant).unwrap_or(5),
            run,
            rules,
            vectors,
        })
    }

    fn encoder_setup(&self, train_set: &[LabeledSample]) -> Result<EncoderSetup, PipelineError> {
        Ok(match &self.vectors {
            Some(v) => EncoderSetup::Precomputed(v.clone()),
            None => {
                let texts: Vec<&str> = train_set.iter().map(|s| s.text.as_str()).collect();
                EncoderSetup::Mini {
                    config: self.run.encoder,
                    vocab: Vocabulary::build(&texts, self.run.min_freq)?,
                }
            }
        })
    }

    fn load(&self, dir: &Path) -> Result<Model, PipelineError> {
        Ok(load_model(dir, self.vectors.clone())?.0)
    }
}

fn missing(path: &Path, e: io::Error) -> PipelineError {
    match e.kind() {
        io::ErrorKind::NotFound => PipelineError::MissingFile(path.to_path_buf()),
        _ => PipelineError::Io(e),
    }
}

fn source_samples(src: &Source, rules: &TopicRuleSet) -> Result<Vec<LabeledSample>, PipelineError> {
    match (&src.data, &src.text) {
        (Some(p), _) => Ok(ingest(p, rules)?.samples),
        (None, Some(t)) => Ok(vec![LabeledSample::new(
            "text",
            t.clone(),
            Vec::<String>::new(),
        )]),
        (None, None) => Err(PipelineError::MalformedLine {
            line: 0,
            reason: "pass --data or --text".into(),
        }),
    }
}

fn print_json_lines<T: serde::Serialize>(items: &[T]) -> Result<(), PipelineError> {
    let mut out = io::stdout().lock();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let s = Settings::resolve(&cli.common)?;
    match cli.command {
        Command::Tag(src) => {
            let tags: Vec<_> = source_samples(&src, &s.rules)?
                .iter()
                .map(|d| s.rules.tag(&d.doc_id, &d.text, s.run.fusion.cap))
                .collect();
            print_json_lines(&tags)
        }
        Command::Train { data, out } => {
            let samples = ingest(&data, &s.rules)?.samples;
            let setup = s.encoder_setup(&samples)?;
            let mut model = assemble_model(s.variant, &s.run.fusion, setup, s.run.seed)?;
            if let Model::Fusion(m) = &mut model {
                let history = train(m, &s.rules, &samples, &s.run.train)?;
                fs::create_dir_all(&out)?;
                fs::write(
                    out.join("history.json"),
                    serde_json::to_string_pretty(&history)? + "\n",
                )?;
                eprintln!(
                    "trained {} epochs, best epoch {}",
                    history.epochs(),
                    history.best_epoch
                );
            }
            save_model(&model, s.run.seed, &out)
        }
        Command::Evaluate { model, data } => {
            let model = s.load(&model)?;
            let samples = ingest(&data, &s.rules)?.samples;
            let preds = predict_batch(&model, &s.rules, &samples, s.run.threshold)?;
            let gold: Vec<_> = samples
                .iter()
                .map(|d| (d.doc_id.clone(), d.labels.clone()))
                .collect();
            let report = evaluate(model.variant(), s.run.threshold, &preds, &gold, &s.rules)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Predict { model, source } => {
            let model = s.load(&model)?;
            let preds: Vec<_> = source_samples(&source, &s.rules)?
                .iter()
                .map(|d| predict(&model, &s.rules, &d.doc_id, &d.text, s.run.threshold))
                .collect::<Result<_, _>>()?;
            print_json_lines(&preds)
        }
        Command::Ablate { data, out } => {
            let samples = ingest(&data, &s.rules)?.samples;
            let outcome = run_ablation(&samples, &s.rules, &s.run, s.vectors.as_ref())?;
            outcome.write_to(&out)?;
            print!("{}", outcome.summary.comparison.to_text());
            Ok(())
        }
        Command::Export { model, data, out } => {
            let model = s.load(&model)?;
            let samples = ingest(&data, &s.rules)?.samples;
            let preds = predict_batch(&model, &s.rules, &samples, s.run.threshold)?;
            let stamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            export_bulk(&preds, model.variant(), &stamp, &out)
        }
        Command::SweepThreshold { model, data, step } => {
            if !(step > 0.0 && step <= 1.0) {
                return Err(PipelineError::InvalidThreshold(step));
            }
            let model = s.load(&model)?;
            let samples = ingest(&data, &s.rules)?.samples;
            let n = (1.0 / step).round() as usize;
            let taus: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
            print_json_lines(&sweep_threshold(&model, &s.rules, &samples, &taus)?)
        }
        Command::GenCorpus {
            size,
            paraphrase_fraction,
            off_topic,
            out,
        } => {
            let samples = if off_topic {
                generate_off_topic(size, s.run.seed)
            } else {
                let mut cfg = CorpusConfig {
                    size,
                    seed: s.run.seed,
                    ..CorpusConfig::default()
                };
                if let Some(f) = paraphrase_fraction {
                    if !(0.0..=1.0).contains(&f) {
                        return Err(PipelineError::InvalidThreshold(f));
                    }
                    cfg.paraphrase_fraction = f;
                }
                generate_corpus(&cfg, &s.rules)
            };
            write_jsonl(&samples, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
