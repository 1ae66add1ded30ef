//! Two-layer GCN with a joint node-classification / node-pair objective.
//!
//! The network computes `y = Â · ReLU(Â · X · W1) · W2`. Node labels come
//! from `softmax(y)` and pair relations from `sigmoid(y_i · y_j)`, so both
//! heads share every parameter.

mod adam;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use loss::{
    combined_loss, node_loss, node_loss_grad, pair_loss, pair_loss_grad, pair_scores, sigmoid,
    LOG_CLAMP,
};
pub use model::{
    backward, forward, init_parameters, ForwardTape, GcnParameters, Gradients, ModelOutput,
};
pub use train::{train_epoch, train_inner, EpochMetrics, InnerRun, StepLosses};

use serde::Serialize;

/// Ordered node pairs with binary "same category" targets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSet {
    pub pairs: Vec<(usize, usize)>,
    pub targets: Vec<bool>,
    pub weights: Vec<f64>,
}

impl PairSet {
    pub fn new() -> Self {
        PairSet {
            pairs: Vec::new(),
            targets: Vec::new(),
            weights: Vec::new(),
        }
    }

    /// Appends `(i, j)` with its target taken from gold labels and weight 1.
    pub fn push(&mut self, i: usize, j: usize, labels: &[usize]) {
        self.pairs.push((i, j));
        self.targets.push(labels[i] == labels[j]);
        self.weights.push(1.0);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> f64 {
        self.targets
            .iter()
            .zip(&self.weights)
            .filter(|(&t, _)| t)
            .map(|(_, &w)| w)
            .sum()
    }

    pub fn negatives(&self) -> f64 {
        self.targets
            .iter()
            .zip(&self.weights)
            .filter(|(&t, _)| !t)
            .map(|(_, &w)| w)
            .sum()
    }

    /// Negative-to-positive ratio, 1 when either side is empty.
    pub fn auto_positive_weight(&self) -> f64 {
        let pos = self.positives();
        let neg = self.negatives();
        if pos > 0.0 && neg > 0.0 {
            neg / pos
        } else {
            1.0
        }
    }
}

impl Default for PairSet {
    fn default() -> Self {
        Self::new()
    }
}
