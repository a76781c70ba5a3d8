//! Differentiable kernels with hand-written backward passes.
//!
//! Every layer's `forward` returns its output together with a cache; the
//! matching `backward` consumes that cache, accumulates parameter gradients
//! into the [`ParamStore`] and returns the gradient with respect to the
//! input. Backward calls must mirror forward calls in reverse order.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamId, ParamStore, Tensor2};

/// `y = x W + b` with `b` broadcast over rows.
pub fn linear_forward(x: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<Tensor2, NumericsError> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(NumericsError::ShapeMismatch(format!(
            "bias {}x{} for weight {}x{}",
            b.rows(),
            b.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        for (o, &bb) in y.row_mut(r).iter_mut().zip(b.data()) {
            *o += bb;
        }
    }
    Ok(y)
}

pub fn relu(x: &Tensor2) -> Tensor2 {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(pre: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = dy.clone();
    for (g, &p) in dx.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Gradient through tanh given its output.
pub fn tanh_backward(out: &Tensor2, dy: &Tensor2) -> Tensor2 {
    let mut dx = dy.clone();
    for (g, &y) in dx.data_mut().iter_mut().zip(out.data()) {
        *g *= 1.0 - y * y;
    }
    dx
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn col_sum_acc(dy: &Tensor2, acc: &mut Tensor2) {
    for r in 0..dy.rows() {
        for (a, &g) in acc.data_mut().iter_mut().zip(dy.row(r)) {
            *a += g;
        }
    }
}

/// `y = x W + b`. The bias is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut layer = Self::without_bias(store, name, d_in, d_out, rng);
        layer.bias = Some(store.zeros(format!("{name}.bias"), 1, d_out));
        layer
    }

    pub fn without_bias(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weight = store.xavier(format!("{name}.weight"), d_in, d_out, rng);
        Linear {
            weight,
            bias: None,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor2) -> Result<Tensor2, NumericsError> {
        match self.bias {
            Some(b) => linear_forward(x, store.value(self.weight), store.value(b)),
            None => x.matmul(store.value(self.weight)),
        }
    }

    /// `x` is the input that was given to `forward`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        x: &Tensor2,
        dy: &Tensor2,
    ) -> Result<Tensor2, NumericsError> {
        x.t_matmul_acc(dy, store.grad_mut(self.weight))?;
        if let Some(b) = self.bias {
            col_sum_acc(dy, store.grad_mut(b));
        }
        dy.matmul_t(store.value(self.weight))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

pub fn embedding_lookup(ids: &[usize], table: &Tensor2) -> Result<Tensor2, NumericsError> {
    let mut out = Tensor2::zeros(ids.len(), table.cols());
    for (i, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(NumericsError::IdOutOfRange {
                id,
                size: table.rows(),
            });
        }
        out.row_mut(i).copy_from_slice(table.row(id));
    }
    Ok(out)
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self::with_limit(store, name, vocab, dim, 0.05, rng)
    }

    /// Table drawn from Uniform(-limit, limit).
    pub fn with_limit(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        limit: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let table = store.uniform(format!("{name}.table"), vocab, dim, limit, rng);
        Embedding { table, vocab, dim }
    }

    pub fn forward(&self, store: &ParamStore, ids: &[usize]) -> Result<Tensor2, NumericsError> {
        embedding_lookup(ids, store.value(self.table))
    }

    /// Scatter-adds `dy` rows into the table gradient; duplicates accumulate.
    pub fn backward(&self, store: &mut ParamStore, ids: &[usize], dy: &Tensor2) {
        let grad = store.grad_mut(self.table);
        for (i, &id) in ids.iter().enumerate() {
            for (g, &d) in grad.row_mut(id).iter_mut().zip(dy.row(i)) {
                *g += d;
            }
        }
    }
}

/// Multi-head scaled dot-product self-attention with a residual connection:
/// `out = X + (concat_h softmax(Q_h K_h^T / sqrt(d_h)) V_h) W_o + b_o`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiHeadSelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    concat: Tensor2,
    /// Per-head `L x L` attention weights; masked keys hold exactly 0.
    pub weights: Vec<Tensor2>,
}

impl MultiHeadSelfAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumericsError> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(NumericsError::ShapeMismatch(format!(
                "dimension {dim} not divisible by {heads} heads"
            )));
        }
        Ok(MultiHeadSelfAttention {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, rng),
            key: Linear::without_bias(store, &format!("{name}.key"), dim, dim, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, rng),
            output: Linear::new(store, &format!("{name}.output"), dim, dim, rng),
            dim,
            heads,
        })
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// `mask[j] == true` marks position `j` as a valid key.
    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        mask: &[bool],
    ) -> Result<(Tensor2, AttentionCache), NumericsError> {
        let len = x.rows();
        if x.cols() != self.dim || mask.len() != len {
            return Err(NumericsError::ShapeMismatch(format!(
                "attention input {}x{} with mask {} (dim {})",
                len,
                x.cols(),
                mask.len(),
                self.dim
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(NumericsError::AllPositionsMasked);
        }
        let q = self.query.forward(store, x)?;
        let k = self.key.forward(store, x)?;
        let v = self.value.forward(store, x)?;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Tensor2::zeros(len, self.dim);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let off = h * dh;
            let mut a = Tensor2::zeros(len, len);
            for i in 0..len {
                let qi = &q.row(i)[off..off + dh];
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    if !mask[j] {
                        continue;
                    }
                    let kj = &k.row(j)[off..off + dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    a.set(i, j, s);
                    max = max.max(s);
                }
                let mut total = 0.0;
                for j in 0..len {
                    if mask[j] {
                        let e = (a.get(i, j) - max).exp();
                        a.set(i, j, e);
                        total += e;
                    }
                }
                let row = a.row_mut(i);
                for (j, w) in row.iter_mut().enumerate() {
                    if mask[j] {
                        *w /= total;
                    }
                }
                let out = &mut concat.row_mut(i)[off..off + dh];
                for j in 0..len {
                    let w = a.get(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    for (o, &vv) in out.iter_mut().zip(&v.row(j)[off..off + dh]) {
                        *o += w * vv;
                    }
                }
            }
            weights.push(a);
        }
        let mut out = self.output.forward(store, &concat)?;
        out.add_assign(x);
        Ok((
            out,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                concat,
                weights,
            },
        ))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &AttentionCache,
        dout: &Tensor2,
    ) -> Result<Tensor2, NumericsError> {
        let len = cache.x.rows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dx = dout.clone();
        let dconcat = self.output.backward(store, &cache.concat, dout)?;
        let mut dq = Tensor2::zeros(len, self.dim);
        let mut dk = Tensor2::zeros(len, self.dim);
        let mut dv = Tensor2::zeros(len, self.dim);
        let mut da = vec![0.0; len];
        for (h, a) in cache.weights.iter().enumerate() {
            let off = h * dh;
            for i in 0..len {
                let dci = &dconcat.row(i)[off..off + dh];
                // dA[i][j] = dO_i . V_j ; dV_j += A[i][j] dO_i
                for j in 0..len {
                    let w = a.get(i, j);
                    if w == 0.0 {
                        da[j] = 0.0;
                        continue;
                    }
                    da[j] = dci
                        .iter()
                        .zip(&cache.v.row(j)[off..off + dh])
                        .map(|(x, y)| x * y)
                        .sum();
                    for (g, &d) in dv.row_mut(j)[off..off + dh].iter_mut().zip(dci) {
                        *g += w * d;
                    }
                }
                let dot: f64 = (0..len).map(|j| a.get(i, j) * da[j]).sum();
                for j in 0..len {
                    let w = a.get(i, j);
                    if w == 0.0 {
                        continue;
                    }
                    let ds = w * (da[j] - dot) * scale;
                    let kj = cache.k.row(j)[off..off + dh].to_vec();
                    for (g, kk) in dq.row_mut(i)[off..off + dh].iter_mut().zip(kj) {
                        *g += ds * kk;
                    }
                    let qi = cache.q.row(i)[off..off + dh].to_vec();
                    for (g, qq) in dk.row_mut(j)[off..off + dh].iter_mut().zip(qi) {
                        *g += ds * qq;
                    }
                }
            }
        }
        dx.add_assign(&self.query.backward(store, &cache.x, &dq)?);
        dx.add_assign(&self.key.backward(store, &cache.x, &dk)?);
        dx.add_assign(&self.value.backward(store, &cache.x, &dv)?);
        Ok(dx)
    }
}

/// Row-wise layer normalization with learned gain and bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normed: Tensor2,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let mut ones = Tensor2::zeros(1, dim);
        ones.fill(1.0);
        let gain = store.add(format!("{name}.gain"), ones);
        let bias = store.zeros(format!("{name}.bias"), 1, dim);
        LayerNorm {
            gain,
            bias,
            dim,
            eps: 1e-5,
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
    ) -> Result<(Tensor2, LayerNormCache), NumericsError> {
        if x.cols() != self.dim {
            return Err(NumericsError::ShapeMismatch("layer norm width".into()));
        }
        let gain = store.value(self.gain).data();
        let bias = store.value(self.bias).data();
        let n = self.dim as f64;
        let mut normed = Tensor2::zeros(x.rows(), x.cols());
        let mut out = Tensor2::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + self.eps).sqrt();
            inv_std.push(inv);
            for c in 0..x.cols() {
                let xh = (row[c] - mean) * inv;
                normed.set(r, c, xh);
                out.set(r, c, xh * gain[c] + bias[c]);
            }
        }
        Ok((out, LayerNormCache { normed, inv_std }))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &LayerNormCache,
        dy: &Tensor2,
    ) -> Tensor2 {
        let n = self.dim as f64;
        {
            let dg = store.grad_mut(self.gain);
            for r in 0..dy.rows() {
                for c in 0..self.dim {
                    dg.data_mut()[c] += dy.get(r, c) * cache.normed.get(r, c);
                }
            }
        }
        col_sum_acc(dy, store.grad_mut(self.bias));
        let gain = store.value(self.gain).data().to_vec();
        let mut dx = Tensor2::zeros(dy.rows(), dy.cols());
        for r in 0..dy.rows() {
            let dxh: Vec<f64> = (0..self.dim).map(|c| dy.get(r, c) * gain[c]).collect();
            let sum: f64 = dxh.iter().sum();
            let dot: f64 = dxh
                .iter()
                .enumerate()
                .map(|(c, g)| g * cache.normed.get(r, c))
                .sum();
            for c in 0..self.dim {
                let v = cache.inv_std[r] / n * (n * dxh[c] - sum - cache.normed.get(r, c) * dot);
                dx.set(r, c, v);
            }
        }
        dx
    }
}

/// Options for the optional sub-layers of a [`TransformerBlock`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct BlockOptions {
    pub layer_norm: bool,
    /// Hidden width of the position-wise feed-forward sub-block; `None` disables it.
    pub ffn_hidden: Option<usize>,
}

/// Self-attention (+ residual), optionally followed by layer norm and a
/// residual position-wise feed-forward sub-block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformerBlock {
    pub attention: MultiHeadSelfAttention,
    pub norm1: Option<LayerNorm>,
    pub ffn: Option<(Linear, Linear)>,
    pub norm2: Option<LayerNorm>,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    pub attention: AttentionCache,
    norm1: Option<LayerNormCache>,
    ffn_in: Option<Tensor2>,
    ffn_pre: Option<Tensor2>,
    ffn_act: Option<Tensor2>,
    norm2: Option<LayerNormCache>,
}

impl TransformerBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        options: BlockOptions,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NumericsError> {
        let attention =
            MultiHeadSelfAttention::new(store, &format!("{name}.attn"), dim, heads, rng)?;
        let norm1 = options
            .layer_norm
            .then(|| LayerNorm::new(store, &format!("{name}.norm1"), dim));
        let ffn = options.ffn_hidden.map(|hidden| {
            (
                Linear::new(store, &format!("{name}.ffn1"), dim, hidden, rng),
                Linear::new(store, &format!("{name}.ffn2"), hidden, dim, rng),
            )
        });
        let norm2 = (options.layer_norm && ffn.is_some())
            .then(|| LayerNorm::new(store, &format!("{name}.norm2"), dim));
        Ok(TransformerBlock {
            attention,
            norm1,
            ffn,
            norm2,
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor2,
        mask: &[bool],
    ) -> Result<(Tensor2, BlockCache), NumericsError> {
        let (mut h, attention) = self.attention.forward(store, x, mask)?;
        let mut cache = BlockCache {
            attention,
            norm1: None,
            ffn_in: None,
            ffn_pre: None,
            ffn_act: None,
            norm2: None,
        };
        if let Some(norm) = &self.norm1 {
            let (y, c) = norm.forward(store, &h)?;
            h = y;
            cache.norm1 = Some(c);
        }
        if let Some((l1, l2)) = &self.ffn {
            let pre = l1.forward(store, &h)?;
            let act = relu(&pre);
            let mut y = l2.forward(store, &act)?;
            y.add_assign(&h);
            cache.ffn_in = Some(h);
            cache.ffn_pre = Some(pre);
            cache.ffn_act = Some(act);
            h = y;
            if let Some(norm) = &self.norm2 {
                let (y, c) = norm.forward(store, &h)?;
                h = y;
                cache.norm2 = Some(c);
            }
        }
        Ok((h, cache))
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &BlockCache,
        dy: &Tensor2,
    ) -> Result<Tensor2, NumericsError> {
        let mut g = dy.clone();
        if let Some((l1, l2)) = &self.ffn {
            if let (Some(norm), Some(c)) = (&self.norm2, &cache.norm2) {
                g = norm.backward(store, c, &g);
            }
            let act = cache.ffn_act.as_ref().expect("ffn cache");
            let pre = cache.ffn_pre.as_ref().expect("ffn cache");
            let input = cache.ffn_in.as_ref().expect("ffn cache");
            let dact = l2.backward(store, act, &g)?;
            let dpre = relu_backward(pre, &dact);
            let dinput = l1.backward(store, input, &dpre)?;
            g.add_assign(&dinput);
        }
        if let (Some(norm), Some(c)) = (&self.norm1, &cache.norm1) {
            g = norm.backward(store, c, &g);
        }
        self.attention.backward(store, &cache.attention, &g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_linear_is_identity() {
        let x = Tensor2::from_rows(&[&[1.0, -2.0, 3.0]]).unwrap();
        let y = linear_forward(&x, &Tensor2::identity(3), &Tensor2::zeros(1, 3)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_gives_bias() {
        let b = Tensor2::row_vector(vec![0.5, -1.5]);
        let y = linear_forward(&Tensor2::zeros(3, 4), &Tensor2::zeros(4, 2), &b).unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), b.row(0));
        }
    }

    #[test]
    fn embedding_duplicate_ids_accumulate() {
        let mut store = ParamStore::new();
        let emb = Embedding::new(&mut store, "e", 5, 3, &mut rng());
        let out = emb.forward(&store, &[2]).unwrap();
        assert_eq!(out.row(0), store.value(emb.table).row(2));
        let mut ones = Tensor2::zeros(2, 3);
        ones.fill(1.0);
        emb.backward(&mut store, &[2, 2], &ones);
        assert_eq!(store.grad(emb.table).row(2), &[2.0, 2.0, 2.0]);
        assert_eq!(store.grad(emb.table).row(1), &[0.0, 0.0, 0.0]);
        assert!(matches!(
            emb.forward(&store, &[5]),
            Err(NumericsError::IdOutOfRange { id: 5, size: 5 })
        ));
    }

    #[test]
    fn single_position_attention_weight_is_one() {
        let mut store = ParamStore::new();
        let attn = MultiHeadSelfAttention::new(&mut store, "a", 4, 2, &mut rng()).unwrap();
        let x = Tensor2::from_rows(&[&[0.1, 0.2, -0.3, 0.4]]).unwrap();
        let (out, cache) = attn.forward(&store, &x, &[true]).unwrap();
        for w in &cache.weights {
            assert_eq!(w.data(), &[1.0]);
        }
        let v = attn.value.forward(&store, &x).unwrap();
        let mut expect = attn.output.forward(&store, &v).unwrap();
        expect.add_assign(&x);
        for (a, b) in out.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_keys_split_evenly() {
        let mut store = ParamStore::new();
        let attn = MultiHeadSelfAttention::new(&mut store, "a", 4, 1, &mut rng()).unwrap();
        let x = Tensor2::from_rows(&[&[0.3, -0.1, 0.2, 0.5], &[0.3, -0.1, 0.2, 0.5]]).unwrap();
        let (_, cache) = attn.forward(&store, &x, &[true, true]).unwrap();
        for v in cache.weights[0].data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_keys_get_zero_weight() {
        let mut store = ParamStore::new();
        let attn = MultiHeadSelfAttention::new(&mut store, "a", 4, 2, &mut rng()).unwrap();
        let x =
            Tensor2::from_rows(&[&[1.0, 0.0, 0.0, 1.0], &[0.0, 1.0, 1.0, 0.0], &[1.0; 4]]).unwrap();
        let (_, cache) = attn.forward(&store, &x, &[true, false, true]).unwrap();
        for w in &cache.weights {
            for i in 0..3 {
                assert_eq!(w.get(i, 1), 0.0);
                assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        assert!(matches!(
            attn.forward(&store, &x, &[false, false, false]),
            Err(NumericsError::AllPositionsMasked)
        ));
    }

    #[test]
    fn heads_must_divide_dim() {
        let mut store = ParamStore::new();
        assert!(MultiHeadSelfAttention::new(&mut store, "a", 6, 4, &mut rng()).is_err());
    }
}
