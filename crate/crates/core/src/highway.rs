//! The self-training outer loop: train with the joint node/pair objective,
//! then add edges from one training node per category to every node that
//! both heads confidently place in the same category, and retrain on the
//! rewired graph until validation accuracy stops rising.

use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{HighwayConfig, MaskPolicy};
use crate::dataio::{DataSplit, Dataset};
use crate::error::{HighwayError, Result};
use crate::eval::{accuracy, edge_precision};
use crate::gcn::{sigmoid, train_inner, GcnParameters, ModelOutput, PairSet};
use crate::graph::{Hops, SparseGraph};

/// All ordered pairs of training nodes, diagonal included, row-major over
/// the (sorted) training list.
pub fn sample_pairs(train: &[usize], labels: &[usize]) -> Result<PairSet> {
    if train.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    let mut pairs = PairSet::new();
    for &i in train {
        for &j in train {
            pairs.push(i, j, labels);
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStrategy {
    /// The first pairs of the training grid in row-major order.
    Lead,
    /// Uniform draws with replacement.
    Random,
    /// Pairs at most 2 hops apart are drawn 3× as often.
    Close,
    /// Pairs 3–4 hops apart are drawn 3× as often.
    Middle,
    /// Pairs 5+ hops apart, or disconnected, are drawn 3× as often.
    Remote,
}

impl PairStrategy {
    pub const ALL: [PairStrategy; 5] = [
        PairStrategy::Lead,
        PairStrategy::Random,
        PairStrategy::Close,
        PairStrategy::Middle,
        PairStrategy::Remote,
    ];

    /// Whether a pair at distance `hops` falls into this strategy's band.
    pub fn in_band(self, hops: Hops) -> bool {
        match (self, hops) {
            (PairStrategy::Close, Hops::Finite(d)) => d <= 2,
            (PairStrategy::Middle, Hops::Finite(d)) => (3..=4).contains(&d),
            (PairStrategy::Remote, Hops::Finite(d)) => d >= 5,
            (PairStrategy::Remote, Hops::Unreachable) => true,
            _ => false,
        }
    }
}

impl FromStr for PairStrategy {
    type Err = HighwayError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lead" => Ok(PairStrategy::Lead),
            "random" => Ok(PairStrategy::Random),
            "close" => Ok(PairStrategy::Close),
            "middle" => Ok(PairStrategy::Middle),
            "remote" => Ok(PairStrategy::Remote),
            other => Err(HighwayError::Config(format!("unknown sampling strategy `{other}`"))),
        }
    }
}

impl fmt::Display for PairStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            PairStrategy::Lead => "lead",
            PairStrategy::Random => "random",
            PairStrategy::Close => "close",
            PairStrategy::Middle => "middle",
            PairStrategy::Remote => "remote",
        })
    }
}

/// Relative draw weight of an in-band pair.
pub const BAND_WEIGHT: f64 = 3.0;

/// Draws `count` training pairs according to `strategy`. Hop distances
/// between pair endpoints are measured on `graph`.
pub fn sample_pairs_strategy(
    graph: &SparseGraph,
    train: &[usize],
    labels: &[usize],
    strategy: PairStrategy,
    count: usize,
    rng: &mut impl Rng,
) -> Result<PairSet> {
    if train.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    if count == 0 {
        return Err(HighwayError::Config("pair count must be >= 1".into()));
    }
    let t = train.len();
    let grid = t * t;
    let at = |k: usize| (train[k / t], train[k % t]);
    let mut pairs = PairSet::new();
    match strategy {
        PairStrategy::Lead => {
            for k in 0..count.min(grid) {
                let (i, j) = at(k);
                pairs.push(i, j, labels);
            }
        }
        PairStrategy::Random => {
            for _ in 0..count {
                let (i, j) = at(rng.random_range(0..grid));
                pairs.push(i, j, labels);
            }
        }
        banded => {
            let dist: Vec<Vec<Hops>> = train.iter().map(|&s| graph.bfs_from(s)).collect();
            let weights = (0..grid).map(|k| {
                let hops = dist[k / t][train[k % t]];
                if banded.in_band(hops) {
                    BAND_WEIGHT
                } else {
                    1.0
                }
            });
            let sampler = WeightedIndex::new(weights).expect("weights are positive");
            for _ in 0..count {
                let (i, j) = at(sampler.sample(rng));
                pairs.push(i, j, labels);
            }
        }
    }
    Ok(pairs)
}

/// Rows of the node-agreement matrix: `(i, j)` is set iff both nodes share a
/// predicted label and both confidences strictly exceed `t_n`.
pub fn node_matrix_rows(output: &ModelOutput, t_n: f64, rows: &[usize]) -> Vec<Vec<bool>> {
    let n = output.n();
    rows.iter()
        .map(|&i| {
            let li = output.predicted[i];
            let ci = output.confidence[i];
            (0..n)
                .map(|j| ci > t_n && output.confidence[j] > t_n && output.predicted[j] == li)
                .collect()
        })
        .collect()
}

/// Rows of the pair matrix: `(i, j)` is set iff `sigmoid(y_i · y_j) >= t_p`.
pub fn pair_matrix_rows(output: &ModelOutput, t_p: f64, rows: &[usize]) -> Vec<Vec<bool>> {
    rows.iter()
        .map(|&i| pair_row_scores(output, i).map(|s| s >= t_p).collect())
        .collect()
}

fn pair_row_scores(output: &ModelOutput, i: usize) -> impl Iterator<Item = f64> + '_ {
    let yi = output.logits.row(i);
    output.logits.outer_iter().map(move |yj| sigmoid(yi.dot(&yj)))
}

/// One training node per category, in category order.
pub fn build_mask_rows(
    train: &[usize],
    labels: &[usize],
    num_classes: usize,
    policy: MaskPolicy,
    output: Option<&ModelOutput>,
) -> Result<Vec<usize>> {
    let mut chosen: Vec<Option<usize>> = vec![None; num_classes];
    for &i in train {
        let slot = &mut chosen[labels[i]];
        *slot = match (*slot, policy) {
            (None, _) => Some(i),
            (Some(cur), MaskPolicy::First) => Some(cur.min(i)),
            (Some(cur), MaskPolicy::Confident) => {
                let out = output.ok_or_else(|| {
                    HighwayError::Config("mask policy `confident` needs model output".into())
                })?;
                let (cc, ci) = (out.confidence[cur], out.confidence[i]);
                if ci > cc || (ci == cc && i < cur) {
                    Some(i)
                } else {
                    Some(cur)
                }
            }
        };
    }
    chosen
        .into_iter()
        .enumerate()
        .map(|(c, slot)| slot.ok_or_else(|| HighwayError::CategoryMissing(c.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    NodeMatrix,
    PairMatrix,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeProposal {
    /// The mask-row training node.
    pub source: usize,
    pub target: usize,
    pub decision: Decision,
}

/// Candidate edges from each mask row: both matrices must fire (only the
/// node matrix when `joint_decision` is off), the pair must not already be
/// an edge, and self-pairs are skipped.
pub fn propose_edges(
    output: &ModelOutput,
    cfg: &HighwayConfig,
    mask_rows: &[usize],
    graph: &SparseGraph,
) -> Vec<EdgeProposal> {
    let node_rows = node_matrix_rows(output, cfg.t_n, mask_rows);
    let decision = if cfg.joint_decision { Decision::Both } else { Decision::NodeMatrix };
    let mut proposals = Vec::new();
    for (r, &a) in mask_rows.iter().enumerate() {
        let scores: Vec<f64> = pair_row_scores(output, a).collect();
        let mut row: Vec<usize> = (0..output.n())
            .filter(|&j| {
                node_rows[r][j]
                    && (!cfg.joint_decision || scores[j] >= cfg.t_p)
                    && j != a
                    && !graph.has_edge(a, j)
            })
            .collect();
        if let Some(cap) = cfg.max_edges_per_row {
            row.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
            row.truncate(cap);
            row.sort_unstable();
        }
        proposals.extend(row.into_iter().map(|j| EdgeProposal {
            source: a,
            target: j,
            decision,
        }));
    }
    proposals
}

/// Which variant of the framework to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Node loss only, one iteration, no rewiring.
    Typical,
    /// Full method.
    Highway,
    /// Rewiring decided by the node matrix alone.
    NoJoint,
    /// Joint loss for one iteration, no rewiring.
    NoExplicit,
}

impl TrainingMode {
    pub const ALL: [TrainingMode; 4] = [
        TrainingMode::Typical,
        TrainingMode::Highway,
        TrainingMode::NoJoint,
        TrainingMode::NoExplicit,
    ];

    /// The configuration this mode actually runs with.
    pub fn apply(self, cfg: &HighwayConfig) -> HighwayConfig {
        let mut cfg = cfg.clone();
        match self {
            TrainingMode::Typical => {
                cfg.lambda = 0.0;
                cfg.max_t = 1;
            }
            TrainingMode::Highway => {}
            TrainingMode::NoJoint => cfg.joint_decision = false,
            TrainingMode::NoExplicit => cfg.max_t = 1,
        }
        cfg
    }
}

impl FromStr for TrainingMode {
    type Err = HighwayError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "typical" => Ok(TrainingMode::Typical),
            "highway" => Ok(TrainingMode::Highway),
            "no-joint" => Ok(TrainingMode::NoJoint),
            "no-explicit" => Ok(TrainingMode::NoExplicit),
            other => Err(HighwayError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            TrainingMode::Typical => "typical",
            TrainingMode::Highway => "highway",
            TrainingMode::NoJoint => "no-joint",
            TrainingMode::NoExplicit => "no-explicit",
        })
    }
}

/// How training pairs are chosen each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PairSampling {
    #[default]
    FullGrid,
    Strategy { strategy: PairStrategy, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub valid_acc: f64,
    pub test_acc: f64,
    /// Undirected edges added after this iteration.
    pub edges_added: usize,
    /// Fraction of added edges joining same-category nodes. Computed from
    /// gold labels for reporting only.
    pub edge_precision: Option<f64>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub graph_edges: usize,
}

#[derive(Debug, Clone)]
pub struct HighwayResult {
    pub iterations: Vec<IterationReport>,
    /// 1-based index of the iteration whose accuracy is reported.
    pub selected_iteration: usize,
    pub valid_acc: f64,
    pub test_acc: f64,
    /// Model output of the selected iteration.
    pub output: ModelOutput,
    /// Graph the selected iteration was trained on.
    pub graph: SparseGraph,
    pub params: GcnParameters,
}

/// Runs the outer loop on `ds` with `cfg` as given (apply a
/// [`TrainingMode`] first to get the ablations).
pub fn highway_train(
    ds: &Dataset,
    split: &DataSplit,
    cfg: &HighwayConfig,
    sampling: PairSampling,
) -> Result<HighwayResult> {
    cfg.validate()?;
    split.validate(ds.n())?;
    if split.test.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    let labels = &ds.labels;
    let mut graph = ds.graph.clone();
    let mut adj = graph.normalize();
    let mut pair_rng = ChaCha8Rng::seed_from_u64(cfg.init_seed.wrapping_add(0x5eed));

    let mut iterations = Vec::new();
    let mut prev_valid = 0.0;
    let mut selected: Option<(usize, f64, f64, ModelOutput, SparseGraph, GcnParameters)> = None;
    let mut warm: Option<GcnParameters> = None;

    for iteration in 1..=cfg.max_t {
        let pairs = match sampling {
            PairSampling::FullGrid => sample_pairs(&split.train, labels)?,
            PairSampling::Strategy { strategy, count } => {
                sample_pairs_strategy(&ds.graph, &split.train, labels, strategy, count, &mut pair_rng)?
            }
        };
        let init = if cfg.continue_training { warm.take() } else { None };
        let run = train_inner(&adj, &ds.features, labels, split, &pairs, cfg, cfg.init_seed, init)?;
        let valid_acc = run.best_valid_acc;
        let test_acc = accuracy(&run.output, labels, &split.test)?;
        let mut report = IterationReport {
            iteration,
            valid_acc,
            test_acc,
            edges_added: 0,
            edge_precision: None,
            epochs_run: run.epochs.len(),
            best_epoch: run.best_epoch,
            graph_edges: graph.num_edges(),
        };
        log::debug!("iteration {iteration}: valid {valid_acc:.4} test {test_acc:.4}");

        if valid_acc <= prev_valid {
            if cfg.literal_algorithm || selected.is_none() {
                selected = Some((iteration, valid_acc, test_acc, run.output, graph.clone(), run.params));
            }
            iterations.push(report);
            break;
        }
        prev_valid = valid_acc;

        if iteration < cfg.max_t {
            let mask = build_mask_rows(&split.train, labels, ds.num_classes(), cfg.mask_policy, Some(&run.output))?;
            let proposals = propose_edges(&run.output, cfg, &mask, &graph);
            let additions: Vec<(usize, usize)> = proposals.iter().map(|p| (p.source, p.target)).collect();
            let next = graph.add_edges(&additions)?;
            report.edges_added = next.num_edges() - graph.num_edges();
            report.edge_precision = edge_precision(&proposals, labels);
            selected = Some((iteration, valid_acc, test_acc, run.output, graph, run.params.clone()));
            graph = next;
            adj = graph.normalize();
        } else {
            selected = Some((iteration, valid_acc, test_acc, run.output, graph.clone(), run.params.clone()));
        }
        warm = Some(run.params);
        iterations.push(report);
    }

    let (selected_iteration, valid_acc, test_acc, output, graph, params) =
        selected.expect("every exit path selects an iteration");
    Ok(HighwayResult {
        iterations,
        selected_iteration,
        valid_acc,
        test_acc,
        output,
        graph,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array2};

    fn output_with(predicted: &[usize], confidence: &[f64]) -> ModelOutput {
        let n = predicted.len();
        let mut out = ModelOutput::from_logits(Array2::zeros((n, 2)));
        out.predicted = predicted.to_vec();
        out.confidence = confidence.to_vec();
        out
    }

    #[test]
    fn full_grid_pairs() {
        let labels = [0, 0, 1];
        let p = sample_pairs(&[0, 1, 2], &labels).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(p.targets.iter().filter(|&&t| t).count(), 5);
        let single = sample_pairs(&[2], &labels).unwrap();
        assert_eq!(single.pairs, vec![(2, 2)]);
        assert_eq!(single.targets, vec![true]);
        assert!(sample_pairs(&[], &labels).is_err());
    }

    #[test]
    fn lead_strategy_is_grid_prefix() {
        let g = SparseGraph::empty(4);
        let labels = [0, 1, 0, 1];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lead = sample_pairs_strategy(&g, &[0, 1, 3], &labels, PairStrategy::Lead, 100, &mut rng).unwrap();
        assert_eq!(lead, sample_pairs(&[0, 1, 3], &labels).unwrap());
        let short = sample_pairs_strategy(&g, &[0, 1, 3], &labels, PairStrategy::Lead, 4, &mut rng).unwrap();
        assert_eq!(short.pairs, vec![(0, 0), (0, 1), (0, 3), (1, 0)]);
    }

    #[test]
    fn random_strategy_is_reproducible() {
        let g = SparseGraph::empty(5);
        let labels = [0, 1, 0, 1, 0];
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_pairs_strategy(&g, &[0, 1, 2, 4], &labels, PairStrategy::Random, 50, &mut rng).unwrap()
        };
        assert_eq!(draw(3), draw(3));
        assert_eq!(draw(3).len(), 50);
    }

    #[test]
    fn node_matrix_example() {
        let out = output_with(&[0, 0, 1], &[0.95, 0.5, 0.95]);
        assert_eq!(node_matrix_rows(&out, 0.9, &[0]), vec![vec![true, false, false]]);
        // strict inequality: t_n = 1 never fires
        assert!(node_matrix_rows(&out, 1.0, &[0, 1, 2]).iter().flatten().all(|&b| !b));
    }

    #[test]
    fn pair_matrix_threshold_is_inclusive() {
        // y_0 · y_1 = 0 → score exactly 0.5
        let out = ModelOutput::from_logits(arr2(&[[1.0, 0.0], [0.0, 1.0], [-3.0, 0.0]]));
        let rows = pair_matrix_rows(&out, 0.5, &[0]);
        assert_eq!(rows, vec![vec![true, true, false]]);
        let strict = pair_matrix_rows(&out, 0.9, &[0]);
        assert_eq!(strict, vec![vec![false, false, false]]);
    }

    #[test]
    fn mask_row_policies() {
        let mut labels = vec![0; 8];
        labels[5] = 1;
        let train = [3, 7, 5];
        assert_eq!(build_mask_rows(&train, &labels, 2, MaskPolicy::First, None).unwrap(), vec![3, 5]);
        let mut conf = vec![0.5; 8];
        conf[7] = 0.9;
        conf[3] = 0.6;
        let out = output_with(&[0; 8], &conf);
        assert_eq!(
            build_mask_rows(&train, &labels, 2, MaskPolicy::Confident, Some(&out)).unwrap(),
            vec![7, 5]
        );
        assert!(matches!(
            build_mask_rows(&[3], &labels, 2, MaskPolicy::First, None),
            Err(HighwayError::CategoryMissing(_))
        ));
    }

    #[test]
    fn and_with_exclusions_leaves_nothing() {
        // R^n row 0 = [1, 1, 0], R^p row 0 = [1, 0, 1] → AND = [1, 0, 0],
        // and (0, 0) is a self pair.
        let mut out = ModelOutput::from_logits(arr2(&[[3.0, 0.0], [-3.0, 0.0], [3.0, 0.0]]));
        out.predicted = vec![0, 0, 1];
        out.confidence = vec![0.95, 0.95, 0.95];
        let cfg = HighwayConfig::default();
        assert_eq!(node_matrix_rows(&out, cfg.t_n, &[0]), vec![vec![true, true, false]]);
        assert_eq!(pair_matrix_rows(&out, cfg.t_p, &[0]), vec![vec![true, false, true]]);
        assert!(propose_edges(&out, &cfg, &[0], &SparseGraph::empty(3)).is_empty());

        let node_only = HighwayConfig {
            joint_decision: false,
            ..cfg.clone()
        };
        let p = propose_edges(&out, &node_only, &[0], &SparseGraph::empty(3));
        assert_eq!(
            p,
            vec![EdgeProposal {
                source: 0,
                target: 1,
                decision: Decision::NodeMatrix
            }]
        );
        // already an edge → filtered
        let g = SparseGraph::from_edges(3, [(0, 1)]).unwrap();
        assert!(propose_edges(&out, &node_only, &[0], &g).is_empty());
    }

    #[test]
    fn zero_matrices_propose_nothing() {
        let out = output_with(&[0, 1, 2], &[0.1, 0.1, 0.1]);
        assert!(propose_edges(&out, &HighwayConfig::default(), &[0, 1], &SparseGraph::empty(3)).is_empty());
    }

    #[test]
    fn per_row_cap_keeps_highest_scores() {
        let mut out = ModelOutput::from_logits(arr2(&[[3.0], [1.0], [2.0], [3.0]]));
        out.predicted = vec![0; 4];
        out.confidence = vec![1.0; 4];
        let cfg = HighwayConfig {
            t_n: 0.5,
            t_p: 0.5,
            max_edges_per_row: Some(2),
            ..HighwayConfig::default()
        };
        let targets: Vec<usize> = propose_edges(&out, &cfg, &[0], &SparseGraph::empty(4))
            .iter()
            .map(|p| p.target)
            .collect();
        assert_eq!(targets, vec![2, 3]);
    }

    #[test]
    fn modes_map_to_configs() {
        let base = HighwayConfig::default();
        let typical = TrainingMode::Typical.apply(&base);
        assert_eq!((typical.lambda, typical.max_t), (0.0, 1));
        assert_eq!(TrainingMode::NoExplicit.apply(&base).max_t, 1);
        assert!(!TrainingMode::NoJoint.apply(&base).joint_decision);
        assert_eq!(TrainingMode::Highway.apply(&base), base);
        for m in TrainingMode::ALL {
            assert_eq!(m.to_string().parse::<TrainingMode>().unwrap(), m);
        }
        assert!("fast".parse::<TrainingMode>().is_err());
    }

    #[test]
    fn bands() {
        assert!(PairStrategy::Close.in_band(Hops::Finite(0)));
        assert!(PairStrategy::Close.in_band(Hops::Finite(2)));
        assert!(PairStrategy::Middle.in_band(Hops::Finite(3)));
        assert!(!PairStrategy::Middle.in_band(Hops::Finite(5)));
        assert!(PairStrategy::Remote.in_band(Hops::Finite(5)));
        assert!(PairStrategy::Remote.in_band(Hops::Unreachable));
        assert!(!PairStrategy::Random.in_band(Hops::Unreachable));
    }
}
