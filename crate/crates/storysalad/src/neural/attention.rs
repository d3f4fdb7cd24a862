//! Dot-product attention from a sentence summary over the other sentence's
//! per-token states.

use super::tensor::dot;

/// Forward trace of one attention application.
#[derive(Debug, Clone)]
pub struct AttentionCache {
    /// Normalized weights, one per target position.
    pub weights: Vec<f64>,
    query: Vec<f64>,
    targets: Vec<Vec<f64>>,
}

/// Computes weights `softmax_j(query . targets[j])` and the weighted sum of
/// the targets. Scores are shifted by their maximum before exponentiation.
pub fn attend(query: &[f64], targets: &[Vec<f64>]) -> (Vec<f64>, AttentionCache) {
    assert!(!targets.is_empty(), "attention over an empty sequence");
    let scores: Vec<f64> = targets.iter().map(|t| dot(query, t)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / sum).collect();

    let dim = query.len();
    let mut mixed = vec![0.0; dim];
    for (w, t) in weights.iter().zip(targets) {
        for (m, v) in mixed.iter_mut().zip(t) {
            *m += w * v;
        }
    }
    let cache = AttentionCache {
        weights,
        query: query.to_vec(),
        targets: targets.to_vec(),
    };
    (mixed, cache)
}

/// Backpropagates through [`attend`]. `d_mixed` is the gradient at the
/// weighted sum; returns the gradient at the query and accumulates target
/// gradients into `d_targets`.
pub fn attend_backward(
    cache: &AttentionCache,
    d_mixed: &[f64],
    d_targets: &mut [Vec<f64>],
) -> Vec<f64> {
    let n = cache.targets.len();
    assert_eq!(d_targets.len(), n);

    let mut d_alpha = vec![0.0; n];
    for j in 0..n {
        d_alpha[j] = dot(d_mixed, &cache.targets[j]);
        for (dt, dm) in d_targets[j].iter_mut().zip(d_mixed) {
            *dt += cache.weights[j] * dm;
        }
    }

    let inner: f64 = cache
        .weights
        .iter()
        .zip(&d_alpha)
        .map(|(a, da)| a * da)
        .sum();
    let d_scores: Vec<f64> = cache
        .weights
        .iter()
        .zip(&d_alpha)
        .map(|(a, da)| a * (da - inner))
        .collect();

    let mut d_query = vec![0.0; cache.query.len()];
    for (j, ds) in d_scores.iter().enumerate() {
        for (dq, t) in d_query.iter_mut().zip(&cache.targets[j]) {
            *dq += ds * t;
        }
        for (dt, q) in d_targets[j].iter_mut().zip(&cache.query) {
            *dt += ds * q;
        }
    }
    d_query
}
