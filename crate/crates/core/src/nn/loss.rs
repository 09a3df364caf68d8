use super::Scalar;

/// Probability clamp used by [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Mean binary cross-entropy of probabilities against 0/1 targets; scores are
/// clamped into `[eps, 1 - eps]` first.
pub fn bce_loss<T: Scalar>(scores: &[T], targets: &[T]) -> T {
    assert_eq!(scores.len(), targets.len());
    assert!(!scores.is_empty());
    let eps = T::lit(BCE_EPS);
    let total: T = scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| {
            let s = s.max(eps).min(T::one() - eps);
            -(t * s.ln() + (T::one() - t) * (T::one() - s).ln())
        })
        .sum();
    total / T::from_usize(scores.len()).unwrap()
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets`, evaluated
/// stably in logit space. Returns the loss and its gradient with respect to
/// each logit, `(sigmoid(l) - t) / n`.
pub fn bce_with_logits<T: Scalar>(logits: &[T], targets: &[T]) -> (T, Vec<T>) {
    assert_eq!(logits.len(), targets.len());
    assert!(!logits.is_empty());
    let n = T::from_usize(logits.len()).unwrap();
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (&l, &t) in logits.iter().zip(targets) {
        // max(l, 0) - l t + ln(1 + e^{-|l|})
        total = total + l.max(T::zero()) - l * t + (-l.abs()).exp().ln_1p();
        grad.push((sigmoid(l) - t) / n);
    }
    (total / n, grad)
}
