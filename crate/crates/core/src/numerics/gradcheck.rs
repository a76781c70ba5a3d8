//! Central finite-difference gradient checking.

use super::{NumericsError, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(param name, flat index)` of the worst element.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric derivative at the worst element.
    pub worst_values: (f64, f64),
    pub checked: usize,
    /// Every `(analytic, numeric)` pair in parameter order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheckReport {
    /// Largest `|a - n| - rel * max(|a|, |n|)`; non-positive when every
    /// element is within `rel` relative error or an absolute slack.
    pub fn max_excess(&self, rel: f64) -> f64 {
        self.pairs
            .iter()
            .map(|&(a, n)| (a - n).abs() - rel * a.abs().max(n.abs()))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Compares analytic gradients with `(f(θ+ε) - f(θ-ε)) / 2ε` for every
/// scalar in `store`.
///
/// `f` must zero the gradients, run forward and backward, and return the
/// loss. Relative error uses the denominator `max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut f: F,
    eps: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&mut ParamStore) -> Result<f64, NumericsError>,
{
    grad_check_terms(store, |s| Ok(vec![f(s)?]), eps)
}

/// Like [`grad_check`] for an objective written as a sum of terms, e.g. the
/// per-cell contributions to a mean loss.
///
/// The difference quotient is accumulated term by term,
/// `Σ_i (f_i(θ+ε) - f_i(θ-ε)) / 2ε`, which is the same central difference but
/// keeps the rounding error of each term at the scale of that term rather
/// than of the whole loss. Small-gradient entries such as saturated output
/// cells stay measurable.
pub fn grad_check_terms<F>(
    store: &mut ParamStore,
    mut f: F,
    eps: f64,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&mut ParamStore) -> Result<Vec<f64>, NumericsError>,
{
    let base = f(store)?;
    if base.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFiniteValue("loss at base point".into()));
    }
    let analytic: Vec<Vec<f64>> = store.iter().map(|p| p.grad.data().to_vec()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
        pairs: Vec::new(),
    };
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = store.value(ParamId(pi)).data()[i];
            set(store, pi, i, original + eps);
            let plus = f(store)?;
            set(store, pi, i, original - eps);
            let minus = f(store)?;
            set(store, pi, i, original);
            if plus.len() != base.len() || minus.len() != base.len() {
                return Err(NumericsError::ShapeMismatch(
                    "objective changed its term count".into(),
                ));
            }
            if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFiniteValue(format!(
                    "perturbing param {pi}[{i}]"
                )));
            }
            let diff: f64 = plus.iter().zip(&minus).map(|(p, m)| p - m).sum();
            let numeric = diff / (2.0 * eps);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.param(ParamId(pi)).name.clone(), i));
                report.worst_values = (a, numeric);
            }
            report.checked += 1;
            report.pairs.push((a, numeric));
        }
    }
    // Leave the analytic gradients in place for the caller.
    f(store)?;
    Ok(report)
}

fn set(store: &mut ParamStore, param: usize, index: usize, value: f64) {
    store.value_mut(ParamId(param)).data_mut()[index] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    #[test]
    fn constant_function_has_zero_error() {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::row_vector(vec![1.0, 2.0]));
        let r = grad_check(
            &mut s,
            |s| {
                s.zero_grads();
                Ok(3.0)
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn half_squared_norm() {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::row_vector(vec![0.7, -1.3, 2.5]));
        s.add("q", Tensor2::row_vector(vec![0.9]));
        let r = grad_check(
            &mut s,
            |s| {
                let mut loss = 0.0;
                for p in s.iter_mut() {
                    p.grad = p.value.clone();
                    loss += 0.5 * p.value.data().iter().map(|v| v * v).sum::<f64>();
                }
                Ok(loss)
            },
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::row_vector(vec![1.0]));
        let r = grad_check(
            &mut s,
            |s| {
                let p = s.iter_mut().next().unwrap();
                let x = p.value.data()[0];
                p.grad.data_mut()[0] = 3.0 * x; // true derivative is 2x
                Ok(x * x)
            },
            1e-5,
        )
        .unwrap();
        assert!(r.max_rel_error > 0.3);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut s = ParamStore::new();
        s.add("p", Tensor2::row_vector(vec![1.0]));
        assert!(grad_check(&mut s, |_| Ok(f64::NAN), 1e-5).is_err());
    }
}
