//! Regex-feature embedding, fusion with the pooled text vector, and the
//! two-layer sigmoid classifier.
//!
//! The fused sequence is `[text ; regex rows]`:
//!
//! | regex mode | rows after the text vector                | length    |
//! |------------|-------------------------------------------|-----------|
//! | none       | -                                         | 1         |
//! | bag        | mean of the fired feature embeddings      | 2         |
//! | ordinary   | one row per fired feature, PAD up to cap  | 1 + cap   |
//!
//! Attention fusion runs a self-attention block over the sequence and reads
//! out position 0. Linear fusion flattens the sequence and applies one
//! linear map followed by ReLU.

mod variant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncodeTrace, EncoderError, EncoderInput, TextEncoder};
use crate::numerics::{
    relu, relu_backward, sigmoid, BlockCache, BlockOptions, Embedding, Linear, NumericsError,
    ParamStore, Tensor2, TransformerBlock,
};
use crate::rulebook::{RegexFeatureVector, DEFAULT_CAP, FEATURE_COUNT, TOPIC_COUNT};

pub use variant::{assemble_model, EncoderSetup, Model, Variant};

/// Row of the regex embedding table used for padding.
pub const PAD_FEATURE_ID: usize = FEATURE_COUNT;
/// 28 feature rows plus the PAD row.
pub const REGEX_TABLE_ROWS: usize = FEATURE_COUNT + 1;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("unknown model variant {0} (expected 1..=5)")]
    UnknownVariant(u8),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid fusion config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegexMode {
    None,
    Ordinary,
    Bag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionLayerKind {
    SelfAttention,
    Linear,
}

/// How the attention-fused sequence is reduced to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    First,
    /// Mean over attendable positions.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub regex_mode: RegexMode,
    pub fusion_layer: FusionLayerKind,
    pub heads: usize,
    pub cap: usize,
    pub mask_padding: bool,
    /// Hidden width of the classifier head; `None` means `d_model`.
    pub head_hidden: Option<usize>,
    #[serde(default)]
    pub readout: Readout,
    #[serde(default)]
    pub block: BlockOptions,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            regex_mode: RegexMode::Ordinary,
            fusion_layer: FusionLayerKind::SelfAttention,
            heads: 4,
            cap: DEFAULT_CAP,
            mask_padding: true,
            head_hidden: None,
            readout: Readout::First,
            block: BlockOptions::default(),
        }
    }
}

impl FusionConfig {
    pub fn sequence_len(&self) -> usize {
        match self.regex_mode {
            RegexMode::None => 1,
            RegexMode::Bag => 2,
            RegexMode::Ordinary => 1 + self.cap,
        }
    }

    fn validate(&self, d_model: usize) -> Result<(), FusionError> {
        if self.cap == 0 {
            return Err(FusionError::InvalidConfig("cap must be >= 1".into()));
        }
        if self.fusion_layer == FusionLayerKind::SelfAttention
            && (self.heads == 0 || !d_model.is_multiple_of(self.heads))
        {
            return Err(FusionError::InvalidConfig(format!(
                "{} heads do not divide d_model {d_model}",
                self.heads
            )));
        }
        Ok(())
    }
}

/// Embeds fired features. Returns the rows and a key mask (`true` = real row).
pub fn embed_regex_features(
    fv: &RegexFeatureVector,
    table: &Tensor2,
    mode: RegexMode,
    cap: usize,
) -> Result<(Tensor2, Vec<bool>), FusionError> {
    let d = table.cols();
    for &id in &fv.feature_ids {
        if id >= FEATURE_COUNT || id >= table.rows() {
            return Err(NumericsError::IdOutOfRange {
                id,
                size: FEATURE_COUNT,
            }
            .into());
        }
    }
    match mode {
        RegexMode::None => Ok((Tensor2::zeros(0, d), Vec::new())),
        RegexMode::Ordinary => {
            let ids = ordinary_ids(fv, cap);
            let rows = crate::numerics::embedding_lookup(&ids, table)?;
            let mask = ids.iter().map(|&id| id != PAD_FEATURE_ID).collect();
            Ok((rows, mask))
        }
        RegexMode::Bag => {
            let mut mean = Tensor2::zeros(1, d);
            let n = fv.feature_ids.len().max(1) as f64;
            for &id in &fv.feature_ids {
                for (m, &v) in mean.row_mut(0).iter_mut().zip(table.row(id)) {
                    *m += v;
                }
            }
            mean.data_mut().iter_mut().for_each(|m| *m /= n);
            Ok((mean, vec![true]))
        }
    }
}

fn ordinary_ids(fv: &RegexFeatureVector, cap: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = fv.feature_ids.iter().copied().take(cap).collect();
    ids.resize(cap, PAD_FEATURE_ID);
    ids
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FusionLayer {
    Attention(TransformerBlock),
    Linear(Linear),
}

/// Everything a model needs to score one document.
#[derive(Debug, Clone)]
pub struct ModelInput<'a> {
    pub doc_id: &'a str,
    pub token_ids: &'a [usize],
    pub features: &'a RegexFeatureVector,
}

#[derive(Debug, Clone)]
enum FuseTrace {
    Attention {
        cache: Box<BlockCache>,
        mask: Vec<bool>,
    },
    Linear {
        flat: Tensor2,
        pre: Tensor2,
    },
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    encode: EncodeTrace,
    regex_ids: Vec<usize>,
    seq_len: usize,
    fuse: FuseTrace,
    fused: Tensor2,
    hidden_pre: Tensor2,
    hidden: Tensor2,
    pub logits: Tensor2,
}

/// Parameters and layout of a trainable fusion classifier.
#[derive(Debug, Clone)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub variant: Variant,
    pub encoder: TextEncoder,
    pub params: ParamStore,
    regex_table: Option<Embedding>,
    fusion: FusionLayer,
    head_hidden: Linear,
    head_output: Linear,
}

impl FusionModel {
    pub fn new(
        variant: Variant,
        config: FusionConfig,
        encoder: TextEncoder,
        mut params: ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, FusionError> {
        let d = encoder.d_model();
        config.validate(d)?;
        let regex_table = (config.regex_mode != RegexMode::None)
            .then(|| Embedding::new(&mut params, "regex.embedding", REGEX_TABLE_ROWS, d, rng));
        let fusion = match config.fusion_layer {
            FusionLayerKind::SelfAttention => FusionLayer::Attention(TransformerBlock::new(
                &mut params,
                "fusion",
                d,
                config.heads,
                config.block,
                rng,
            )?),
            FusionLayerKind::Linear => FusionLayer::Linear(Linear::new(
                &mut params,
                "fusion.linear",
                config.sequence_len() * d,
                d,
                rng,
            )),
        };
        let hidden = config.head_hidden.unwrap_or(d);
        let head_hidden = Linear::new(&mut params, "head.hidden", d, hidden, rng);
        let head_output = Linear::new(&mut params, "head.output", hidden, TOPIC_COUNT, rng);
        Ok(FusionModel {
            config,
            variant,
            encoder,
            params,
            regex_table,
            fusion,
            head_hidden,
            head_output,
        })
    }

    /// Convenience constructor with its own seeded RNG and no encoder params.
    pub fn with_seed(
        variant: Variant,
        config: FusionConfig,
        encoder: TextEncoder,
        seed: u64,
    ) -> Result<Self, FusionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(variant, config, encoder, ParamStore::new(), &mut rng)
    }

    pub fn d_model(&self) -> usize {
        self.encoder.d_model()
    }

    pub fn regex_table(&self) -> Option<&Embedding> {
        self.regex_table.as_ref()
    }

    pub fn head(&self) -> (&Linear, &Linear) {
        (&self.head_hidden, &self.head_output)
    }

    pub fn fusion_layer(&self) -> &FusionLayer {
        &self.fusion
    }

    /// Builds the fused input sequence and its key mask.
    fn fused_sequence(
        &self,
        text_vec: &Tensor2,
        fv: &RegexFeatureVector,
    ) -> Result<(Tensor2, Vec<bool>, Vec<usize>), FusionError> {
        let d = self.d_model();
        if text_vec.shape() != (1, d) {
            return Err(FusionError::ShapeMismatch(format!(
                "text vector {:?}, expected (1, {d})",
                text_vec.shape()
            )));
        }
        let (rows, mask, ids) = match (&self.regex_table, self.config.regex_mode) {
            (Some(table), mode) if mode != RegexMode::None => {
                let (rows, mask) = embed_regex_features(
                    fv,
                    self.params.value(table.table),
                    mode,
                    self.config.cap,
                )?;
                let ids = match mode {
                    RegexMode::Ordinary => ordinary_ids(fv, self.config.cap),
                    _ => fv.feature_ids.clone(),
                };
                (rows, mask, ids)
            }
            _ => (Tensor2::zeros(0, d), Vec::new(), Vec::new()),
        };
        let seq = Tensor2::vstack(&[text_vec, &rows])?;
        let mut full_mask = Vec::with_capacity(seq.rows());
        full_mask.push(true);
        full_mask.extend(mask.iter().map(|&m| m || !self.config.mask_padding));
        Ok((seq, full_mask, ids))
    }

    /// Fuses a pooled text vector with regex features into one `1 x d` vector.
    pub fn fuse(
        &self,
        text_vec: &Tensor2,
        fv: &RegexFeatureVector,
    ) -> Result<Tensor2, FusionError> {
        let (seq, mask, _) = self.fused_sequence(text_vec, fv)?;
        Ok(self.fuse_sequence(&seq, &mask)?.0)
    }

    fn fuse_sequence(
        &self,
        seq: &Tensor2,
        mask: &[bool],
    ) -> Result<(Tensor2, FuseTrace), FusionError> {
        match &self.fusion {
            FusionLayer::Attention(block) => {
                let (out, cache) = block.forward(&self.params, seq, mask)?;
                let fused = match self.config.readout {
                    Readout::First => out.row_block(0, 1),
                    Readout::Mean => {
                        let valid = mask.iter().filter(|&&m| m).count() as f64;
                        let mut acc = Tensor2::zeros(1, out.cols());
                        for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                            for (a, &v) in acc.row_mut(0).iter_mut().zip(out.row(r)) {
                                *a += v / valid;
                            }
                        }
                        acc
                    }
                };
                Ok((
                    fused,
                    FuseTrace::Attention {
                        cache: Box::new(cache),
                        mask: mask.to_vec(),
                    },
                ))
            }
            FusionLayer::Linear(linear) => {
                let flat = seq.flatten();
                let pre = linear.forward(&self.params, &flat)?;
                Ok((relu(&pre), FuseTrace::Linear { flat, pre }))
            }
        }
    }

    /// Head logits for a fused vector: `W2 relu(W1 x + b1) + b2`.
    pub fn classify_logits(&self, fused: &Tensor2) -> Result<Tensor2, FusionError> {
        let pre = self.head_hidden.forward(&self.params, fused)?;
        Ok(self.head_output.forward(&self.params, &relu(&pre))?)
    }

    /// The 27 topic probabilities for a fused vector.
    pub fn classify(&self, fused: &Tensor2) -> Result<Vec<f64>, FusionError> {
        if !fused.is_finite() {
            return Err(FusionError::ShapeMismatch(
                "fused vector is not finite".into(),
            ));
        }
        Ok(self
            .classify_logits(fused)?
            .data()
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }

    /// Full forward pass: encode, embed, fuse, classify. Returns `1 x 27` logits.
    pub fn forward(&self, input: &ModelInput<'_>) -> Result<(Tensor2, ForwardTrace), FusionError> {
        let (text_vec, encode) = self.encoder.encode(
            &self.params,
            EncoderInput {
                doc_id: input.doc_id,
                token_ids: input.token_ids,
            },
        )?;
        self.forward_from_text(&text_vec, input.features, encode)
    }

    fn forward_from_text(
        &self,
        text_vec: &Tensor2,
        fv: &RegexFeatureVector,
        encode: EncodeTrace,
    ) -> Result<(Tensor2, ForwardTrace), FusionError> {
        let (seq, mask, regex_ids) = self.fused_sequence(text_vec, fv)?;
        let (fused, fuse) = self.fuse_sequence(&seq, &mask)?;
        let hidden_pre = self.head_hidden.forward(&self.params, &fused)?;
        let hidden = relu(&hidden_pre);
        let logits = self.head_output.forward(&self.params, &hidden)?;
        Ok((
            logits.clone(),
            ForwardTrace {
                encode,
                regex_ids,
                seq_len: seq.rows(),
                fuse,
                fused,
                hidden_pre,
                hidden,
                logits,
            },
        ))
    }

    pub fn predict_proba(&self, input: &ModelInput<'_>) -> Result<Vec<f64>, FusionError> {
        let (logits, _) = self.forward(input)?;
        Ok(logits.data().iter().map(|&z| sigmoid(z)).collect())
    }

    /// Accumulates parameter gradients for `dlogits` (shape `1 x 27`).
    pub fn backward(&mut self, trace: &ForwardTrace, dlogits: &Tensor2) -> Result<(), FusionError> {
        let d = self.d_model();
        let dhidden = self
            .head_output
            .backward(&mut self.params, &trace.hidden, dlogits)?;
        let dpre = relu_backward(&trace.hidden_pre, &dhidden);
        let dfused = self
            .head_hidden
            .backward(&mut self.params, &trace.fused, &dpre)?;
        let dseq = match (&self.fusion, &trace.fuse) {
            (FusionLayer::Attention(block), FuseTrace::Attention { cache, mask }) => {
                let mut dout = Tensor2::zeros(trace.seq_len, d);
                match self.config.readout {
                    Readout::First => dout.row_mut(0).copy_from_slice(dfused.row(0)),
                    Readout::Mean => {
                        let valid = mask.iter().filter(|&&m| m).count() as f64;
                        for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                            for (g, &v) in dout.row_mut(r).iter_mut().zip(dfused.row(0)) {
                                *g = v / valid;
                            }
                        }
                    }
                }
                block.backward(&mut self.params, cache, &dout)?
            }
            (FusionLayer::Linear(linear), FuseTrace::Linear { flat, pre }) => {
                let dpre = relu_backward(pre, &dfused);
                linear
                    .backward(&mut self.params, flat, &dpre)?
                    .reshape(trace.seq_len, d)?
            }
            _ => {
                return Err(FusionError::ShapeMismatch(
                    "trace does not match fusion layer".into(),
                ))
            }
        };
        if let Some(table) = &self.regex_table {
            let drows = dseq.row_block(1, trace.seq_len - 1);
            match self.config.regex_mode {
                RegexMode::Ordinary => table.backward(&mut self.params, &trace.regex_ids, &drows),
                RegexMode::Bag => {
                    let n = trace.regex_ids.len() as f64;
                    let grad = self.params.grad_mut(table.table);
                    for &id in &trace.regex_ids {
                        for (g, &v) in grad.row_mut(id).iter_mut().zip(drows.row(0)) {
                            *g += v / n;
                        }
                    }
                }
                RegexMode::None => {}
            }
        }
        let dtext = dseq.row_block(0, 1);
        self.encoder
            .backward(&mut self.params, &trace.encode, &dtext)?;
        Ok(())
    }
}
