//! Model directories: `model.json` describes the architecture and
//! `params.ckpt` holds the parameters in checkpoint format.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::encoder::{EncoderConfig, PrecomputedEncoder, TextEncoder, Vocabulary};
use crate::fusion::{assemble_model, EncoderSetup, FusionConfig, Model, Variant};
use crate::numerics::{read_checkpoint_into, write_checkpoint};

pub const MANIFEST_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "params.ckpt";
const FORMAT: &str = "topicfuse-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderManifest {
    Mini {
        config: EncoderConfig,
        vocab: Vocabulary,
    },
    Precomputed {
        d_model: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub variant: Variant,
    pub seed: u64,
    pub fusion: Option<FusionConfig>,
    pub encoder: Option<EncoderManifest>,
}

impl ModelManifest {
    pub fn describe(model: &Model, seed: u64) -> Self {
        let (fusion, encoder) = match model {
            Model::RulesOnly => (None, None),
            Model::Fusion(m) => {
                let enc = match &m.encoder {
                    TextEncoder::Mini(e) => EncoderManifest::Mini {
                        config: e.config,
                        vocab: e.vocab.clone(),
                    },
                    TextEncoder::Precomputed(p) => EncoderManifest::Precomputed {
                        d_model: p.d_model(),
                    },
                };
                (Some(m.config), Some(enc))
            }
        };
        ModelManifest {
            format: FORMAT.to_string(),
            variant: model.variant(),
            seed,
            fusion,
            encoder,
        }
    }
}

pub fn save_model(model: &Model, seed: u64, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let manifest = ModelManifest::describe(model, seed);
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    if let Model::Fusion(m) = model {
        write_checkpoint(
            &m.params,
            BufWriter::new(File::create(dir.join(PARAMS_FILE))?),
        )?;
    }
    Ok(())
}

/// Rebuilds a saved model. Models on precomputed vectors need `vectors`.
pub fn load_model(
    dir: impl AsRef<Path>,
    vectors: Option<PrecomputedEncoder>,
) -> Result<(Model, ModelManifest), PipelineError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        return Err(PipelineError::MissingFile(manifest_path));
    }
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format != FORMAT {
        return Err(PipelineError::InvalidModel(format!(
            "unknown format {:?}",
            manifest.format
        )));
    }
    let (Some(fusion), Some(encoder)) = (manifest.fusion, manifest.encoder.clone()) else {
        if manifest.variant == Variant::RulesOnly {
            return Ok((Model::RulesOnly, manifest));
        }
        return Err(PipelineError::InvalidModel(
            "learned model without architecture".into(),
        ));
    };
    let setup = match encoder {
        EncoderManifest::Mini { config, vocab } => EncoderSetup::Mini { config, vocab },
        EncoderManifest::Precomputed { d_model } => {
            let v = vectors.ok_or_else(|| {
                PipelineError::InvalidModel(
                    "model uses precomputed vectors; pass a vectors file".into(),
                )
            })?;
            if v.d_model() != d_model {
                return Err(PipelineError::InvalidModel(format!(
                    "vectors have dimension {}, model expects {d_model}",
                    v.d_model()
                )));
            }
            EncoderSetup::Precomputed(v)
        }
    };
    let mut model = assemble_model(manifest.variant.number(), &fusion, setup, manifest.seed)?;
    if let Model::Fusion(m) = &mut model {
        let params = dir.join(PARAMS_FILE);
        if !params.exists() {
            return Err(PipelineError::MissingFile(params));
        }
        read_checkpoint_into(&mut m.params, BufReader::new(File::open(params)?))?;
    }
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::checkpoint_bytes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mini_model_round_trip() {
        let vocab = Vocabulary::build(&["the agent was rude", "site keeps freezing"], 1).unwrap();
        let setup = EncoderSetup::Mini {
            config: EncoderConfig {
                d_model: 8,
                max_seq_len: 16,
                layers: 1,
                heads: 2,
                block: Default::default(),
            },
            vocab,
        };
        let cfg = FusionConfig {
            heads: 2,
            ..FusionConfig::default()
        };
        let mut model = assemble_model(4, &cfg, setup, 5).unwrap();
        // Move away from the seeded init so loading must read the checkpoint.
        model
            .as_fusion_mut()
            .unwrap()
            .params
            .randomize(0.3, &mut ChaCha8Rng::seed_from_u64(1));
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, 5, dir.path()).unwrap();
        let (loaded, manifest) = load_model(dir.path(), None).unwrap();
        assert_eq!(manifest.variant, Variant::OrdinaryLinear);
        assert_eq!(
            checkpoint_bytes(&loaded.as_fusion().unwrap().params),
            checkpoint_bytes(&model.as_fusion().unwrap().params)
        );
    }

    #[test]
    fn rules_only_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&Model::RulesOnly, 0, dir.path()).unwrap();
        assert!(!dir.path().join(PARAMS_FILE).exists());
        let (m, _) = load_model(dir.path(), None).unwrap();
        assert!(matches!(m, Model::RulesOnly));
    }

    #[test]
    fn precomputed_needs_vectors() {
        let mut enc = PrecomputedEncoder::new(4);
        enc.insert("a", vec![0.0; 4]).unwrap();
        let cfg = FusionConfig {
            heads: 2,
            ..FusionConfig::default()
        };
        let model = assemble_model(5, &cfg, EncoderSetup::Precomputed(enc.clone()), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, 1, dir.path()).unwrap();
        assert!(matches!(
            load_model(dir.path(), None),
            Err(PipelineError::InvalidModel(_))
        ));
        assert!(load_model(dir.path(), Some(enc)).is_ok());
    }

    #[test]
    fn missing_directory() {
        assert!(matches!(
            load_model("/no/such/model", None),
            Err(PipelineError::MissingFile(_))
        ));
    }
}
