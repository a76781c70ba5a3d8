//! Kernels checked against independent, deliberately naive implementations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topicfuse::numerics::{
    bce_with_logits, bce_with_logits_grad, embedding_lookup, sigmoid, AdamWConfig, AdamWState,
    MultiHeadSelfAttention, ParamStore, Tensor2,
};

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

fn naive_matmul(a: &Tensor2, b: &Tensor2) -> Vec<Vec<f64>> {
    (0..a.rows())
        .map(|i| {
            (0..b.cols())
                .map(|j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
                .collect()
        })
        .collect()
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (m, k, n) = (
            rng.random_range(1..7),
            rng.random_range(1..7),
            rng.random_range(1..7),
        );
        let a = random(m, k, &mut rng);
        let b = random(k, n, &mut rng);
        let fast = a.matmul(&b).unwrap();
        let slow = naive_matmul(&a, &b);
        for i in 0..m {
            for j in 0..n {
                assert!((fast.get(i, j) - slow[i][j]).abs() < 1e-12);
            }
        }
        let bt = random(n, k, &mut rng);
        let via_t = a.matmul_t(&bt).unwrap();
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|c| a.get(i, c) * bt.get(j, c)).sum();
                assert!((via_t.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}

/// Attention written out with explicit loops and an unshifted softmax.
fn brute_attention(
    store: &ParamStore,
    attn: &MultiHeadSelfAttention,
    x: &Tensor2,
) -> Vec<Vec<f64>> {
    let (len, d, h) = (x.rows(), attn.dim, attn.heads);
    let dh = d / h;
    let project = |w: topicfuse::numerics::ParamId,
                   b: Option<topicfuse::numerics::ParamId>|
     -> Vec<Vec<f64>> {
        let w = store.value(w);
        (0..len)
            .map(|i| {
                (0..d)
                    .map(|o| {
                        let bias = b.map_or(0.0, |b| store.value(b).get(0, o));
                        bias + (0..d).map(|c| x.get(i, c) * w.get(c, o)).sum::<f64>()
                    })
                    .collect()
            })
            .collect()
    };
    let q = project(attn.query.weight, attn.query.bias);
    let k = project(attn.key.weight, attn.key.bias);
    let v = project(attn.value.weight, attn.value.bias);
    let mut concat = vec![vec![0.0; d]; len];
    for head in 0..h {
        let cols = head * dh..(head + 1) * dh;
        for i in 0..len {
            let scores: Vec<f64> = (0..len)
                .map(|j| {
                    let dot: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                    (dot / (dh as f64).sqrt()).exp()
                })
                .collect();
            let z: f64 = scores.iter().sum();
            for c in cols.clone() {
                concat[i][c] = (0..len).map(|j| scores[j] / z * v[j][c]).sum();
            }
        }
    }
    let wo = store.value(attn.output.weight);
    let bo = store.value(attn.output.bias.unwrap());
    (0..len)
        .map(|i| {
            (0..d)
                .map(|o| {
                    x.get(i, o)
                        + bo.get(0, o)
                        + (0..d).map(|c| concat[i][c] * wo.get(c, o)).sum::<f64>()
                })
                .collect()
        })
        .collect()
}

#[test]
fn attention_matches_brute_force() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let attn = MultiHeadSelfAttention::new(&mut store, "a", 4, 2, &mut rng).unwrap();
        store.randomize(0.7, &mut rng);
        let x = random(3, 4, &mut rng);
        let (out, cache) = attn.forward(&store, &x, &[true; 3]).unwrap();
        let want = brute_attention(&store, &attn, &x);
        for i in 0..3 {
            for c in 0..4 {
                assert!(
                    (out.get(i, c) - want[i][c]).abs() < 1e-12,
                    "seed {seed} ({i},{c})"
                );
            }
        }
        assert_eq!(cache.weights.len(), 2);
    }
}

#[test]
fn masked_keys_get_zero_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let attn = MultiHeadSelfAttention::new(&mut store, "a", 4, 2, &mut rng).unwrap();
    let x = random(4, 4, &mut rng);
    let (_, cache) = attn
        .forward(&store, &x, &[true, true, false, false])
        .unwrap();
    for w in &cache.weights {
        for i in 0..4 {
            assert_eq!(w.get(i, 2), 0.0);
            assert_eq!(w.get(i, 3), 0.0);
            assert!((w.get(i, 0) + w.get(i, 1) - 1.0).abs() < 1e-12);
        }
    }
}

fn direct_bce(z: f64, t: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    -(t * s.ln() + (1.0 - t) * (1.0 - s).ln())
}

#[test]
fn bce_matches_direct_formula_in_the_safe_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        // Beyond |z| ~ 10 the naive `1 - s` cancels and the oracle itself loses digits.
        let z = random(2, 5, &mut rng).map(|v| v * 8.0);
        let t = Tensor2::from_vec(
            2,
            5,
            (0..10).map(|_| rng.random_range(0..2) as f64).collect(),
        )
        .unwrap();
        let got = bce_with_logits(&z, &t).unwrap();
        let want: f64 = z
            .data()
            .iter()
            .zip(t.data())
            .map(|(&z, &t)| direct_bce(z, t))
            .sum::<f64>()
            / 10.0;
        assert!(
            (got - want).abs() <= 1e-10 * want.max(1.0),
            "{got} vs {want}"
        );
        let g = bce_with_logits_grad(&z, &t).unwrap();
        for ((&gz, &zz), &tt) in g.data().iter().zip(z.data()).zip(t.data()) {
            assert!((gz - (sigmoid(zz) - tt) / 10.0).abs() < 1e-15);
        }
    }
}

#[test]
fn bce_follows_asymptotes_at_extreme_logits() {
    // For |z| large the loss tends to max(z,0) - z t; the direct formula overflows to inf there.
    let cases = [
        (1000.0, 0.0, 1000.0),
        (-1000.0, 1.0, 1000.0),
        (1000.0, 1.0, 0.0),
        (-1000.0, 0.0, 0.0),
    ];
    for (z, t, want) in cases {
        let got =
            bce_with_logits(&Tensor2::row_vector(vec![z]), &Tensor2::row_vector(vec![t])).unwrap();
        assert!(got.is_finite());
        assert!((got - want).abs() < 1e-12, "z={z} t={t}: {got}");
    }
    assert!(direct_bce(1000.0, 0.0).is_infinite());
}

#[test]
fn embedding_gathers_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = random(6, 3, &mut rng);
    let ids = [5, 0, 5, 2];
    let out = embedding_lookup(&ids, &table).unwrap();
    for (r, &id) in ids.iter().enumerate() {
        assert_eq!(out.row(r), table.row(id));
    }
    assert!(embedding_lookup(&[6], &table).is_err());
}

#[test]
fn adamw_first_steps_match_hand_computation() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor2::row_vector(vec![0.5, -2.0]));
    let cfg = AdamWConfig {
        lr: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
        weight_decay: 0.01,
    };
    let mut opt = AdamWState::new(&store, cfg);
    let grads = [[0.3, -0.1], [-0.2, 0.4]];
    let mut theta = [0.5f64, -2.0];
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    for (step, g) in grads.iter().enumerate() {
        store.grad_mut(id).data_mut().copy_from_slice(g);
        opt.step(&mut store).unwrap();
        let t = (step + 1) as i32;
        for i in 0..2 {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.9f64.powi(t));
            let vh = v[i] / (1.0 - 0.999f64.powi(t));
            theta[i] = theta[i] - 0.1 * mh / (vh.sqrt() + 1e-8) - 0.1 * 0.01 * theta[i];
        }
        for i in 0..2 {
            assert!(
                (store.value(id).data()[i] - theta[i]).abs() < 1e-14,
                "step {t} [{i}]"
            );
        }
        assert!(store.grad(id).data().iter().all(|&g| g == 0.0));
    }
}
