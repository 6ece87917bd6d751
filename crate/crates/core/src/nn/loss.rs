use crate::linalg::Scalar;
use crate::prelude::*;

/// `log Σ exp(v_i)`, shifted by the maximum so large magnitudes do not overflow.
pub fn logsumexp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Row-wise log-softmax of a logit vector.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = logsumexp(logits);
    logits.iter().map(|&l| l - lse).collect()
}

/// Mean softmax cross-entropy over `labels.len()` rows of `logits`
/// (`rows × classes`). When `grad` is given, `d loss / d logits` is written
/// into it (overwriting).
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
    mut grad: Option<&mut [T]>,
) -> f64 {
    let rows = labels.len();
    debug_assert_eq!(logits.len(), rows * classes);
    let scale = 1.0 / rows.max(1) as f64;
    let mut total = 0.0;
    let mut row_buf = vec![0.0f64; classes];
    for (r, (&y, row)) in labels.iter().zip(logits.chunks_exact(classes)).enumerate() {
        for (dst, &l) in row_buf.iter_mut().zip(row) {
            *dst = l.to_f64();
        }
        let lse = logsumexp(&row_buf);
        total += lse - row_buf[y];
        if let Some(g) = grad.as_deref_mut() {
            let g_row = &mut g[r * classes..(r + 1) * classes];
            for (c, dst) in g_row.iter_mut().enumerate() {
                let p = (row_buf[c] - lse).exp();
                let target = if c == y { 1.0 } else { 0.0 };
                *dst = T::from_f64((p - target) * scale);
            }
        }
    }
    total * scale
}
