use super::{NumericsError, Tensor2};

fn check(logits: &Tensor2, targets: &Tensor2) -> Result<(), NumericsError> {
    if logits.shape() != targets.shape() {
        return Err(NumericsError::ShapeMismatch(format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    Ok(())
}

/// Per-cell loss `-[t log s(z) + (1 - t) log(1 - s(z))]` in the stable form
/// `max(z, 0) - z t + ln(1 + e^{-|z|})`.
#[inline]
pub fn bce_cell(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over every cell.
pub fn bce_with_logits(logits: &Tensor2, targets: &Tensor2) -> Result<f64, NumericsError> {
    check(logits, targets)?;
    let n = logits.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let total: f64 = logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &t)| bce_cell(z, t))
        .sum();
    Ok(total / n as f64)
}

/// The per-cell summands of [`bce_with_logits`], each already divided by the
/// cell count.
pub fn bce_with_logits_terms(
    logits: &Tensor2,
    targets: &Tensor2,
) -> Result<Vec<f64>, NumericsError> {
    check(logits, targets)?;
    let n = logits.data().len().max(1) as f64;
    Ok(logits
        .data()
        .iter()
        .zip(targets.data())
        .map(|(&z, &t)| bce_cell(z, t) / n)
        .collect())
}

/// Gradient of [`bce_with_logits`] with respect to the logits.
pub fn bce_with_logits_grad(logits: &Tensor2, targets: &Tensor2) -> Result<Tensor2, NumericsError> {
    check(logits, targets)?;
    let n = logits.data().len().max(1) as f64;
    let mut g = logits.clone();
    for (v, &t) in g.data_mut().iter_mut().zip(targets.data()) {
        *v = (super::sigmoid(*v) - t) / n;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logits_give_ln2() {
        let z = Tensor2::zeros(3, 27);
        let mut t = Tensor2::zeros(3, 27);
        t.set(1, 4, 1.0);
        let loss = bce_with_logits(&z, &t).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_logit_is_nearly_free() {
        assert!(bce_cell(20.0, 1.0) < 1e-8);
        assert!(bce_cell(-20.0, 0.0) < 1e-8);
        assert!((bce_cell(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        assert!(bce_with_logits(&Tensor2::zeros(1, 2), &Tensor2::zeros(2, 1)).is_err());
    }
}
