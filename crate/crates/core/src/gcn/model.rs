use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::NodeFeatures;
use crate::error::{HighwayError, Result};
use crate::graph::NormalizedAdjacency;

/// Weights of the two propagation layers plus Adam moment state.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParameters {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub m1: Array2<f64>,
    pub v1: Array2<f64>,
    pub m2: Array2<f64>,
    pub v2: Array2<f64>,
    pub step: u64,
}

impl GcnParameters {
    /// Wraps given weights with zeroed optimizer state.
    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(HighwayError::Shape(format!(
                "W1 is {:?} but W2 is {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        Ok(GcnParameters {
            m1: Array2::zeros(w1.dim()),
            v1: Array2::zeros(w1.dim()),
            m2: Array2::zeros(w2.dim()),
            v2: Array2::zeros(w2.dim()),
            w1,
            w2,
            step: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }
}

/// Glorot-uniform weights, `±sqrt(6 / (fan_in + fan_out))`.
pub fn init_parameters(input: usize, hidden: usize, classes: usize, seed: u64) -> GcnParameters {
    assert!(input >= 1 && hidden >= 1 && classes >= 1, "layer sizes must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = glorot(input, hidden, &mut rng);
    let w2 = glorot(hidden, classes, &mut rng);
    GcnParameters::from_weights(w1, w2).expect("shapes agree by construction")
}

fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..=limit))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        (self.w1.iter().chain(self.w2.iter()).map(|g| g * g).sum::<f64>()).sqrt()
    }
}

/// Logits and everything derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    /// Second-layer output before softmax, `n × C`.
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
    pub predicted: Vec<usize>,
    pub confidence: Vec<f64>,
}

impl ModelOutput {
    pub fn from_logits(logits: Array2<f64>) -> Self {
        let mut probs = logits.clone();
        let mut predicted = Vec::with_capacity(logits.nrows());
        let mut confidence = Vec::with_capacity(logits.nrows());
        for mut row in probs.axis_iter_mut(Axis(0)) {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
            let (arg, &best) = row
                .iter()
                .enumerate()
                .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
            predicted.push(arg);
            confidence.push(best);
        }
        ModelOutput {
            logits,
            probs,
            predicted,
            confidence,
        }
    }

    pub fn n(&self) -> usize {
        self.logits.nrows()
    }
}

/// Intermediate values kept by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Input feature values after dropout, aligned with the CSR of `X`.
    x_values: Vec<f64>,
    /// `Â · X · W1` before the ReLU.
    hidden_pre: Array2<f64>,
    /// Hidden activations after ReLU and dropout.
    hidden: Array2<f64>,
    /// Per-entry dropout scale on the hidden layer (0 or `1/(1-rate)`).
    hidden_scale: Option<Array2<f64>>,
}

/// Runs the network. Dropout (inverted, on input features and hidden
/// activations) applies only when `training` is set.
pub fn forward(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    p: &GcnParameters,
    dropout: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(ModelOutput, ForwardTape)> {
    if adj.n() != x.n() || x.width() != p.input_dim() {
        return Err(HighwayError::Shape(format!(
            "adjacency {} nodes, features {}×{}, W1 {:?}",
            adj.n(),
            x.n(),
            x.width(),
            p.w1.dim()
        )));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(HighwayError::Shape(format!("dropout rate {dropout} outside [0, 1)")));
    }
    let active = training && dropout > 0.0;
    let keep_scale = 1.0 / (1.0 - dropout);

    let x_values: Vec<f64> = if active {
        x.values()
            .iter()
            .map(|&v| if rng.random::<f64>() < dropout { 0.0 } else { v * keep_scale })
            .collect()
    } else {
        x.values().to_vec()
    };

    let xw = sparse_dense(x, &x_values, &p.w1.view());
    let hidden_pre = adj.matmul(&xw.view());
    let mut hidden = hidden_pre.mapv(|v| v.max(0.0));
    let hidden_scale = if active {
        let scale = Array2::from_shape_simple_fn(hidden.dim(), || {
            if rng.random::<f64>() < dropout {
                0.0
            } else {
                keep_scale
            }
        });
        hidden *= &scale;
        Some(scale)
    } else {
        None
    };
    let logits = adj.matmul(&hidden.dot(&p.w2).view());
    Ok((
        ModelOutput::from_logits(logits),
        ForwardTape {
            x_values,
            hidden_pre,
            hidden,
            hidden_scale,
        },
    ))
}

/// Reverse-mode pass from `∂L/∂y` to parameter gradients.
pub fn backward(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    p: &GcnParameters,
    tape: &ForwardTape,
    grad_logits: &Array2<f64>,
) -> Gradients {
    // y = Â·(H·W2), Â symmetric
    let grad_hw = adj.matmul(&grad_logits.view());
    let w2 = tape.hidden.t().dot(&grad_hw);
    let mut grad_hidden = grad_hw.dot(&p.w2.t());
    if let Some(scale) = &tape.hidden_scale {
        grad_hidden *= scale;
    }
    Zip::from(&mut grad_hidden)
        .and(&tape.hidden_pre)
        .for_each(|g, &pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
    let grad_xw = adj.matmul(&grad_hidden.view());
    let w1 = sparse_transpose_dense(x, &tape.x_values, &grad_xw.view());
    Gradients { w1, w2 }
}

/// `X · M` with `X`'s sparsity pattern and substituted values.
fn sparse_dense(x: &NodeFeatures, values: &[f64], m: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.n(), m.ncols()));
    let row_ptr = x.row_ptr();
    let cols = x.col_idx();
    for (i, mut out_row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for k in row_ptr[i]..row_ptr[i + 1] {
            if values[k] != 0.0 {
                out_row.scaled_add(values[k], &m.row(cols[k]));
            }
        }
    }
    out
}

/// `Xᵀ · M` with `X`'s sparsity pattern and substituted values.
fn sparse_transpose_dense(x: &NodeFeatures, values: &[f64], m: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((x.width(), m.ncols()));
    let row_ptr = x.row_ptr();
    let cols = x.col_idx();
    for i in 0..x.n() {
        let src = m.row(i);
        for k in row_ptr[i]..row_ptr[i + 1] {
            if values[k] != 0.0 {
                out.row_mut(cols[k]).scaled_add(values[k], &src);
            }
        }
    }
    out
}
