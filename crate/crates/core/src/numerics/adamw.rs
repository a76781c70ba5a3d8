//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{NumericsError, ParamStore, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub t: u64,
}

impl AdamWState {
    pub fn new(store: &ParamStore, config: AdamWConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| Tensor2::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamWState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update of every parameter from its accumulated gradient:
    ///
    /// ```text
    /// m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
    /// theta -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * theta
    /// ```
    ///
    /// Gradients are zeroed afterwards.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), NumericsError> {
        if self.m.len() != store.len() {
            return Err(NumericsError::ShapeMismatch(format!(
                "optimizer tracks {} params, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.value.shape() != m.shape() {
                return Err(NumericsError::ShapeMismatch(format!(
                    "moments for {}",
                    p.name
                )));
            }
            let theta = p.value.data_mut();
            let grad = p.grad.data();
            for i in 0..theta.len() {
                let g = grad[i];
                let mi = &mut m.data_mut()[i];
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                let mhat = *mi / bc1;
                let vi = &mut v.data_mut()[i];
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let vhat = *vi / bc2;
                theta[i] -= lr * (mhat / (vhat.sqrt() + eps)) + lr * weight_decay * theta[i];
            }
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::row_vector(values.to_vec()));
        s
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut s = store_with(&[0.3, -1.2, 4.0]);
        let before = s.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let mut opt = AdamWState::new(&s, cfg);
        for _ in 0..5 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(opt.t, 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store_with(&[0.5]);
        s.iter_mut().next().unwrap().grad.fill(1.0);
        let cfg = AdamWConfig {
            lr: 1e-3,
            weight_decay: 0.0,
            eps: 1e-12,
            ..AdamWConfig::default()
        };
        let mut opt = AdamWState::new(&s, cfg);
        opt.step(&mut s).unwrap();
        let theta = s.iter().next().unwrap().value.data()[0];
        assert!((theta - (0.5 - 1e-3)).abs() < 1e-12);
        assert_eq!(s.iter().next().unwrap().grad.data()[0], 0.0);
    }

    #[test]
    fn pure_decay_scales_parameters() {
        let mut s = store_with(&[2.0, -3.0]);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        };
        let mut opt = AdamWState::new(&s, cfg);
        opt.step(&mut s).unwrap();
        let v = s.iter().next().unwrap().value.data().to_vec();
        assert!((v[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!((v[1] + 3.0 * 0.95).abs() < 1e-15);
    }
}
