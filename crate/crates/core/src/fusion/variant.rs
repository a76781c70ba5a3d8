use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, MiniEncoder, PrecomputedEncoder, TextEncoder, Vocabulary};
use crate::numerics::ParamStore;

use super::{FusionConfig, FusionError, FusionLayerKind, FusionModel, RegexMode};

/// The five ablation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Variant {
    /// Rules only, no learned parameters.
    RulesOnly = 1,
    /// Text encoder only, self-attention over the pooled vector.
    TextOnly = 2,
    /// Averaged regex embeddings, self-attention fusion.
    BagAttention = 3,
    /// Per-feature regex embeddings, linear fusion.
    OrdinaryLinear = 4,
    /// Per-feature regex embeddings, self-attention fusion.
    OrdinaryAttention = 5,
}

impl TryFrom<u8> for Variant {
    type Error = FusionError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Ok(match v {
            1 => Variant::RulesOnly,
            2 => Variant::TextOnly,
            3 => Variant::BagAttention,
            4 => Variant::OrdinaryLinear,
            5 => Variant::OrdinaryAttention,
            other => return Err(FusionError::UnknownVariant(other)),
        })
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v as u8
    }
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::RulesOnly,
        Variant::TextOnly,
        Variant::BagAttention,
        Variant::OrdinaryLinear,
        Variant::OrdinaryAttention,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn text_channel(self) -> &'static str {
        match self {
            Variant::RulesOnly => "N/A",
            _ => "TextEncoder",
        }
    }

    pub fn regex_channel(self) -> &'static str {
        match self {
            Variant::RulesOnly => "RegexGeneratedFeatures",
            Variant::TextOnly => "N/A",
            Variant::BagAttention => "RegexEmbeddingBag",
            Variant::OrdinaryLinear | Variant::OrdinaryAttention => "RegexEmbedding",
        }
    }

    pub fn fusion_name(self) -> &'static str {
        match self {
            Variant::RulesOnly => "N/A",
            Variant::OrdinaryLinear => "Linear",
            _ => "SelfAttention",
        }
    }

    /// Regex mode and fusion layer for learned variants; `None` for rules-only.
    pub fn layout(self) -> Option<(RegexMode, FusionLayerKind)> {
        match self {
            Variant::RulesOnly => None,
            Variant::TextOnly => Some((RegexMode::None, FusionLayerKind::SelfAttention)),
            Variant::BagAttention => Some((RegexMode::Bag, FusionLayerKind::SelfAttention)),
            Variant::OrdinaryLinear => Some((RegexMode::Ordinary, FusionLayerKind::Linear)),
            Variant::OrdinaryAttention => {
                Some((RegexMode::Ordinary, FusionLayerKind::SelfAttention))
            }
        }
    }
}

/// Which text encoder to attach to a learned model.
#[derive(Debug, Clone)]
pub enum EncoderSetup {
    Mini {
        config: EncoderConfig,
        vocab: Vocabulary,
    },
    Precomputed(PrecomputedEncoder),
}

#[derive(Debug, Clone)]
pub enum Model {
    RulesOnly,
    Fusion(Box<FusionModel>),
}

impl Model {
    pub fn variant(&self) -> Variant {
        match self {
            Model::RulesOnly => Variant::RulesOnly,
            Model::Fusion(m) => m.variant,
        }
    }

    pub fn as_fusion(&self) -> Option<&FusionModel> {
        match self {
            Model::Fusion(m) => Some(m),
            Model::RulesOnly => None,
        }
    }

    pub fn as_fusion_mut(&mut self) -> Option<&mut FusionModel> {
        match self {
            Model::Fusion(m) => Some(m),
            Model::RulesOnly => None,
        }
    }
}

/// Builds a model for `variant`. The variant fixes the regex mode and fusion
/// layer; every other setting comes from `overrides`. All parameters are
/// initialised from a single RNG seeded with `seed`: encoder first, then the
/// regex table, fusion layer and head.
pub fn assemble_model(
    variant: u8,
    overrides: &FusionConfig,
    encoder: EncoderSetup,
    seed: u64,
) -> Result<Model, FusionError> {
    let variant = Variant::try_from(variant)?;
    let Some((regex_mode, fusion_layer)) = variant.layout() else {
        return Ok(Model::RulesOnly);
    };
    let config = FusionConfig {
        regex_mode,
        fusion_layer,
        ..*overrides
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    let encoder = match encoder {
        EncoderSetup::Mini { config, vocab } => TextEncoder::Mini(Box::new(MiniEncoder::new(
            &mut params,
            config,
            vocab,
            &mut rng,
        )?)),
        EncoderSetup::Precomputed(p) => TextEncoder::Precomputed(p),
    };
    let model = FusionModel::new(variant, config, encoder, params, &mut rng)?;
    Ok(Model::Fusion(Box::new(model)))
}
