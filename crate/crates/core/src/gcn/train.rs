use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::loss::{combined_loss, node_loss, node_loss_grad, pair_loss, pair_loss_grad};
use super::model::{backward, forward, init_parameters, GcnParameters, ModelOutput};
use super::{adam_step, PairSet};
use crate::config::HighwayConfig;
use crate::dataio::{DataSplit, NodeFeatures};
use crate::error::{HighwayError, Result};
use crate::eval::accuracy;
use crate::graph::NormalizedAdjacency;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub node_loss: f64,
    pub pair_loss: f64,
    pub loss: f64,
    pub valid_acc: f64,
}

/// Result of one inner training run.
#[derive(Debug, Clone)]
pub struct InnerRun {
    /// Parameters at the best-validation epoch.
    pub params: GcnParameters,
    /// Dropout-free output of the best-validation parameters.
    pub output: ModelOutput,
    /// Parameters after the last executed epoch.
    pub final_params: GcnParameters,
    pub best_epoch: usize,
    pub best_valid_acc: f64,
    pub epochs: Vec<EpochMetrics>,
}

/// Loss values of one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub node: f64,
    pub pair: f64,
    pub total: f64,
}

/// One full-batch step: forward with dropout, joint loss, backward, Adam.
///
/// With `lambda == 0` the pair gradient is never formed, so the update is
/// exactly the node-only update.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    labels: &[usize],
    train: &[usize],
    pairs: &PairSet,
    positive_weight: f64,
    cfg: &HighwayConfig,
    params: &mut GcnParameters,
    rng: &mut impl Rng,
) -> Result<StepLosses> {
    let (out, tape) = forward(adj, x, params, cfg.dropout, rng, true)?;
    let node = node_loss(&out, labels, train);
    let mut grad: Array2<f64> = node_loss_grad(&out, labels, train);
    let pair = if pairs.is_empty() {
        0.0
    } else {
        pair_loss(&out.logits.view(), pairs, positive_weight)
    };
    if cfg.lambda != 0.0 && !pairs.is_empty() {
        grad.scaled_add(cfg.lambda, &pair_loss_grad(&out.logits.view(), pairs, positive_weight));
    }
    let grads = backward(adj, x, params, &tape, &grad);
    adam_step(params, &grads, cfg.lr, cfg.weight_decay);
    Ok(StepLosses {
        node,
        pair,
        total: combined_loss(node, pair, cfg.lambda),
    })
}

/// Trains one model for at most `cfg.epochs` epochs with early stopping on
/// validation accuracy and returns the best-validation checkpoint.
///
/// An epoch that does not strictly improve the best validation accuracy
/// counts toward `cfg.patience`; training stops once `patience` such epochs
/// have accumulated since the last improvement (at the first one when
/// `patience == 0`).
#[allow(clippy::too_many_arguments)]
pub fn train_inner(
    adj: &NormalizedAdjacency,
    x: &NodeFeatures,
    labels: &[usize],
    split: &DataSplit,
    pairs: &PairSet,
    cfg: &HighwayConfig,
    seed: u64,
    warm_start: Option<GcnParameters>,
) -> Result<InnerRun> {
    cfg.validate()?;
    if split.train.is_empty() || split.valid.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    let num_classes = labels.iter().copied().max().map_or(1, |c| c + 1);
    let mut params = match warm_start {
        Some(p) => p,
        None => init_parameters(x.width().max(1), cfg.hidden, num_classes, seed),
    };
    let positive_weight = cfg.pos_weight.unwrap_or_else(|| pairs.auto_positive_weight());
    // dropout masks draw from a stream separate from initialization
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(0);

    let mut best: Option<(GcnParameters, ModelOutput, usize, f64)> = None;
    let mut stale = 0usize;
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.epochs {
        let losses = train_epoch(adj, x, labels, &split.train, pairs, positive_weight, cfg, &mut params, &mut rng)?;
        let (out, _) = forward(adj, x, &params, 0.0, &mut eval_rng, false)?;
        let valid_acc = accuracy(&out, labels, &split.valid)?;
        epochs.push(EpochMetrics {
            epoch,
            node_loss: losses.node,
            pair_loss: losses.pair,
            loss: losses.total,
            valid_acc,
        });
        let improved = best.as_ref().is_none_or(|b| valid_acc > b.3);
        if improved {
            best = Some((params.clone(), out, epoch, valid_acc));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (best_params, output, best_epoch, best_valid_acc) =
        best.expect("at least one epoch runs because epochs >= 1");
    Ok(InnerRun {
        params: best_params,
        output,
        final_params: params,
        best_epoch,
        best_valid_acc,
        epochs,
    })
}
