use ndarray::{Array2, ArrayView2};

use super::{ModelOutput, PairSet};
use crate::error::{HighwayError, Result};

/// Probabilities are clamped to `[LOG_CLAMP, 1 - LOG_CLAMP]` before logs.
pub const LOG_CLAMP: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(y: &ArrayView2<f64>, i: usize, j: usize) -> f64 {
    y.row(i).dot(&y.row(j))
}

/// `sigmoid(y_i · y_j)` for each requested pair, never forming `y·yᵀ`.
pub fn pair_scores(y: &ArrayView2<f64>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = y.nrows();
    pairs
        .iter()
        .map(|&(i, j)| {
            let bad = if i >= n { Some(i) } else if j >= n { Some(j) } else { None };
            match bad {
                Some(index) => Err(HighwayError::IndexOutOfRange { index, n }),
                None => Ok(sigmoid(dot(y, i, j))),
            }
        })
        .collect()
}

/// Summed negative log-probability of the gold class over `nodes`.
pub fn node_loss(output: &ModelOutput, labels: &[usize], nodes: &[usize]) -> f64 {
    nodes
        .iter()
        .map(|&i| -output.probs[[i, labels[i]]].max(LOG_CLAMP).ln())
        .sum()
}

/// `∂ node_loss / ∂ logits`: `p_i - onehot(gold_i)` on the listed rows.
pub fn node_loss_grad(output: &ModelOutput, labels: &[usize], nodes: &[usize]) -> Array2<f64> {
    let mut grad = Array2::zeros(output.probs.dim());
    for &i in nodes {
        let mut row = grad.row_mut(i);
        row += &output.probs.row(i);
        row[labels[i]] -= 1.0;
    }
    grad
}

// log of the clamped probability, and its derivative with respect to z.
// `p` is the probability of the target outcome, `q = 1 - p` computed
// without cancellation. The derivative is zero where the clamp is active.
fn clamped_log_term(p: f64, q: f64) -> (f64, f64) {
    let clamped = p.clamp(LOG_CLAMP, 1.0 - LOG_CLAMP);
    let d = if (LOG_CLAMP..=1.0 - LOG_CLAMP).contains(&p) { q } else { 0.0 };
    (clamped.ln(), d)
}

/// Weighted binary cross-entropy over the pair set, summed (not averaged).
/// Positive pairs are scaled by `positive_weight`.
pub fn pair_loss(y: &ArrayView2<f64>, pairs: &PairSet, positive_weight: f64) -> f64 {
    let mut total = 0.0;
    for (k, &(i, j)) in pairs.pairs.iter().enumerate() {
        let z = dot(y, i, j);
        let w = pairs.weights[k];
        if pairs.targets[k] {
            let (log_p, _) = clamped_log_term(sigmoid(z), sigmoid(-z));
            total -= w * positive_weight * log_p;
        } else {
            let (log_q, _) = clamped_log_term(sigmoid(-z), sigmoid(z));
            total -= w * log_q;
        }
    }
    total
}

/// `∂ pair_loss / ∂ y`. Each pair `(i, j)` feeds both rows `i` and `j`.
pub fn pair_loss_grad(y: &ArrayView2<f64>, pairs: &PairSet, positive_weight: f64) -> Array2<f64> {
    let mut grad = Array2::zeros(y.dim());
    for (k, &(i, j)) in pairs.pairs.iter().enumerate() {
        let z = dot(y, i, j);
        let w = pairs.weights[k];
        // d(-log σ(z))/dz = -(1 - σ(z)),  d(-log(1 - σ(z)))/dz = σ(z)
        let g = if pairs.targets[k] {
            let (_, d) = clamped_log_term(sigmoid(z), sigmoid(-z));
            -w * positive_weight * d
        } else {
            let (_, d) = clamped_log_term(sigmoid(-z), sigmoid(z));
            w * d
        };
        if g == 0.0 {
            continue;
        }
        grad.row_mut(i).scaled_add(g, &y.row(j));
        grad.row_mut(j).scaled_add(g, &y.row(i));
    }
    grad
}

pub fn combined_loss(node: f64, pair: f64, lambda: f64) -> f64 {
    node + lambda * pair
}
