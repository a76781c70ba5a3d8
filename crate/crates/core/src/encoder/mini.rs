//! Small trainable transformer encoder with a tanh-pooled first position.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{
    tanh_backward, BlockCache, BlockOptions, Embedding, Linear, ParamStore, Tensor2,
    TransformerBlock,
};

use super::{EncoderError, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub max_seq_len: usize,
    pub layers: usize,
    pub heads: usize,
    #[serde(default)]
    pub block: BlockOptions,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            max_seq_len: 250,
            layers: 2,
            heads: 4,
            block: BlockOptions::default(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(EncoderError::InvalidConfig(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.max_seq_len == 0 {
            return Err(EncoderError::InvalidConfig(
                "max_seq_len must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiniEncoder {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    token_embedding: Embedding,
    position_embedding: Embedding,
    blocks: Vec<TransformerBlock>,
    pooler: Linear,
}

#[derive(Debug, Clone)]
pub struct MiniEncoderTrace {
    ids: Vec<usize>,
    blocks: Vec<BlockCache>,
    cls_hidden: Tensor2,
    pooled: Tensor2,
    len: usize,
}

impl MiniEncoder {
    pub fn new(
        store: &mut ParamStore,
        config: EncoderConfig,
        vocab: Vocabulary,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let d = config.d_model;
        let token_embedding = Embedding::new(store, "encoder.tokens", vocab.len(), d, rng);
        let position_embedding =
            Embedding::new(store, "encoder.positions", config.max_seq_len, d, rng);
        let blocks = (0..config.layers)
            .map(|l| {
                TransformerBlock::new(
                    store,
                    &format!("encoder.layer{l}"),
                    d,
                    config.heads,
                    config.block,
                    rng,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let pooler = Linear::new(store, "encoder.pooler", d, d, rng);
        Ok(MiniEncoder {
            config,
            vocab,
            token_embedding,
            position_embedding,
            blocks,
            pooler,
        })
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        self.vocab.tokenize(text, self.config.max_seq_len)
    }

    pub fn pooler(&self) -> &Linear {
        &self.pooler
    }

    /// Token + position embeddings, the attention stack, then
    /// `tanh(h_cls W_p + b_p)` on the first position.
    pub fn encode(
        &self,
        store: &ParamStore,
        ids: &[usize],
    ) -> Result<(Tensor2, MiniEncoderTrace), EncoderError> {
        if ids.is_empty() || ids[0] != Vocabulary::CLS {
            return Err(EncoderError::InvalidInput(
                "token ids must start with [CLS]".into(),
            ));
        }
        if ids.len() > self.config.max_seq_len {
            return Err(EncoderError::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        let len = ids.len();
        let positions: Vec<usize> = (0..len).collect();
        let mut h = self.token_embedding.forward(store, ids)?;
        h.add_assign(&self.position_embedding.forward(store, &positions)?);
        let mask = vec![true; len];
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(store, &h, &mask)?;
            caches.push(cache);
            h = next;
        }
        let cls_hidden = h.row_block(0, 1);
        let pooled = self.pooler.forward(store, &cls_hidden)?.map(f64::tanh);
        Ok((
            pooled.clone(),
            MiniEncoderTrace {
                ids: ids.to_vec(),
                blocks: caches,
                cls_hidden,
                pooled,
                len,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        trace: &MiniEncoderTrace,
        dpooled: &Tensor2,
    ) -> Result<(), EncoderError> {
        let dpre = tanh_backward(&trace.pooled, dpooled);
        let dcls = self.pooler.backward(store, &trace.cls_hidden, &dpre)?;
        let mut dh = Tensor2::zeros(trace.len, self.config.d_model);
        dh.row_mut(0).copy_from_slice(dcls.row(0));
        for (block, cache) in self.blocks.iter().zip(&trace.blocks).rev() {
            dh = block.backward(store, cache, &dh)?;
        }
        let positions: Vec<usize> = (0..trace.len).collect();
        self.position_embedding.backward(store, &positions, &dh);
        self.token_embedding.backward(store, &trace.ids, &dh);
        Ok(())
    }
}
