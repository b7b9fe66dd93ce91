//! Softmax and cross-entropy.

use ndarray::Array2;

use crate::nn::scalar::Scalar;

/// Probability floor applied before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Row-wise numerically stable softmax.
pub fn softmax<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let (bsz, classes) = logits.dim();
    let mut probs = Array2::zeros((bsz, classes));
    for r in 0..bsz {
        let row = logits.row(r);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for c in 0..classes {
            let e = (row[c] - max).exp();
            probs[[r, c]] = e;
            denom = denom + e;
        }
        for c in 0..classes {
            probs[[r, c]] = probs[[r, c]] / denom;
        }
    }
    probs
}

/// Mean negative log-probability of the target classes. Probabilities are
/// clamped at [`PROB_CLAMP`] before the log.
pub fn cross_entropy<F: Scalar>(probs: &Array2<F>, targets: &[usize]) -> f64 {
    assert_eq!(probs.dim().0, targets.len(), "batch/target length mismatch");
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let p = probs[[r, t]].to_f64().max(PROB_CLAMP);
        total -= p.ln();
    }
    total / targets.len() as f64
}

/// Gradient of [`cross_entropy`] composed with [`softmax`] with respect to
/// the logits: `(probs - onehot) / batch`.
pub fn ce_softmax_dlogits<F: Scalar>(probs: &Array2<F>, targets: &[usize]) -> Array2<F> {
    let (bsz, _) = probs.dim();
    let inv = F::one() / F::from_f64(bsz as f64);
    let mut d = probs.clone();
    for (r, &t) in targets.iter().enumerate() {
        d[[r, t]] = d[[r, t]] - F::one();
    }
    d.mapv_inplace(|v| v * inv);
    d
}
