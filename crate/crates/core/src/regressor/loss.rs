use crate::stats::{FeatureVector, NUM_FEATURES};

/// Per-feature weights `1 / max(|t_i|, eps)` derived from training means.
pub fn loss_weights(t_bar: &FeatureVector, eps: f64) -> [f64; NUM_FEATURES] {
    t_bar.0.map(|t| 1.0 / t.abs().max(eps))
}

/// Smooth L1 of one residual and its derivative.
#[inline]
pub fn smooth_l1(d: f64, beta: f64) -> (f64, f64) {
    if d.abs() < beta {
        (0.5 * d * d / beta, d / beta)
    } else {
        (d.abs() - 0.5 * beta, d.signum())
    }
}

/// `sum_i w_i * smooth_l1(pred_i - target_i)` over slices of equal length,
/// with the gradient with respect to `pred`.
pub fn weighted_smooth_l1(pred: &[f64], target: &[f64], weights: &[f64], beta: f64) -> (f64, Vec<f64>) {
    debug_assert!(pred.len() == target.len() && pred.len() == weights.len());
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((p, t), w)| {
            let (l, g) = smooth_l1(p - t, beta);
            loss += w * l;
            w * g
        })
        .collect();
    (loss, grad)
}

/// Training objective: weighted smooth L1 between predicted and true
/// features, weights taken from the training means `t_bar`.
pub fn loss_smooth_l1_weighted(
    predicted: &FeatureVector,
    truth: &FeatureVector,
    t_bar: &FeatureVector,
    beta: f64,
    eps: f64,
) -> (f64, [f64; NUM_FEATURES]) {
    let w = loss_weights(t_bar, eps);
    let (loss, grad) = weighted_smooth_l1(&predicted.0, &truth.0, &w, beta);
    (loss, grad.try_into().expect("26 gradients"))
}
