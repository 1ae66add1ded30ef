//! Checks shared by the focused test files and the acceptance gate.
#![allow(dead_code)]

use std::collections::BTreeSet;

use highway_core::dataio::{random_split, VALID_PER_CLASS};
use highway_core::gcn::{
    adam_step, backward, combined_loss, forward, init_parameters, node_loss, node_loss_grad, pair_loss,
    pair_loss_grad, train_epoch, GcnParameters,
};
use highway_core::graph::Hops;
use highway_core::highway::{build_mask_rows, node_matrix_rows, pair_matrix_rows, propose_edges, sample_pairs};
use highway_core::{Dataset, HighwayConfig, MaskPolicy, ModelOutput, NodeFeatures, PairSet, SparseGraph};
use ndarray::{arr2, Array2};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: u32 = 128;

pub fn proptest_config() -> ProptestConfig {
    ProptestConfig {
        cases: CASES,
        ..ProptestConfig::default()
    }
}

// ---- strategies

pub fn graph_strategy(max_n: usize) -> impl Strategy<Value = SparseGraph> {
    (1..=max_n).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |e| SparseGraph::from_edges(n, e).unwrap())
    })
}

pub fn graph_and_additions() -> impl Strategy<Value = (SparseGraph, Vec<(usize, usize)>)> {
    graph_strategy(30).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), prop::collection::vec((0..n, 0..n), 0..40))
    })
}

pub fn output_strategy(max_n: usize, classes: usize) -> impl Strategy<Value = ModelOutput> {
    (1..=max_n).prop_flat_map(move |n| {
        prop::collection::vec(-4.0f64..4.0, n * classes)
            .prop_map(move |v| ModelOutput::from_logits(Array2::from_shape_vec((n, classes), v).unwrap()))
    })
}

pub fn split_case() -> impl Strategy<Value = (Vec<usize>, usize, u64)> {
    (prop::collection::vec(0usize..40, 1..6), 1usize..25, any::<u64>())
}

// ---- structural invariants

pub fn check_add_edges(g: &SparseGraph, adds: &[(usize, usize)]) -> Result<(), TestCaseError> {
    let once = g.add_edges(adds).unwrap();
    let before: BTreeSet<_> = g.edges().collect();
    let after: BTreeSet<_> = once.edges().collect();
    prop_assert!(before.is_subset(&after));
    for &(a, b) in adds {
        if a != b {
            prop_assert!(once.has_edge(a, b) && once.has_edge(b, a));
        } else {
            prop_assert_eq!(once.has_edge(a, a), false);
        }
    }
    prop_assert_eq!(&once.add_edges(adds).unwrap(), &once);
    prop_assert_eq!(&g.add_edges(&[]).unwrap(), g);
    Ok(())
}

pub fn floyd_warshall(g: &SparseGraph) -> Vec<Vec<Option<u32>>> {
    let n = g.n();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
        for &j in g.neighbors(i) {
            row[j] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].is_none_or(|c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

pub fn check_bfs(g: &SparseGraph) -> Result<(), TestCaseError> {
    let oracle = floyd_warshall(g);
    for (s, want) in oracle.iter().enumerate() {
        let got = g.bfs_from(s);
        for (t, w) in want.iter().enumerate() {
            prop_assert_eq!(got[t], w.map_or(Hops::Unreachable, Hops::Finite));
        }
    }
    Ok(())
}

pub fn check_joint_subset(out: &ModelOutput, t_n: f64, t_p: f64) -> Result<(), TestCaseError> {
    let g = SparseGraph::empty(out.n());
    let rows: Vec<usize> = (0..out.n().min(3)).collect();
    let joint = HighwayConfig {
        t_n,
        t_p,
        joint_decision: true,
        ..HighwayConfig::default()
    };
    let node_only = HighwayConfig {
        joint_decision: false,
        ..joint.clone()
    };
    let pairs = |cfg: &HighwayConfig| -> BTreeSet<(usize, usize)> {
        propose_edges(out, cfg, &rows, &g).iter().map(|p| (p.source, p.target)).collect()
    };
    prop_assert!(pairs(&joint).is_subset(&pairs(&node_only)));
    Ok(())
}

pub fn check_threshold_monotone(out: &ModelOutput, lo: f64, hi: f64) -> Result<(), TestCaseError> {
    let rows: Vec<usize> = (0..out.n()).collect();
    let (n_lo, n_hi) = (node_matrix_rows(out, lo, &rows), node_matrix_rows(out, hi, &rows));
    let (p_lo, p_hi) = (pair_matrix_rows(out, lo, &rows), pair_matrix_rows(out, hi, &rows));
    for r in 0..rows.len() {
        for j in 0..out.n() {
            prop_assert!(!n_hi[r][j] || n_lo[r][j]);
            prop_assert!(!p_hi[r][j] || p_lo[r][j]);
        }
    }
    Ok(())
}

pub fn check_mask_rows(out: &ModelOutput, seed: u64, confident: bool) -> Result<(), TestCaseError> {
    let n = out.n();
    if n < 3 {
        return Ok(());
    }
    let mut labels: Vec<usize> = (0..n).map(|i| (i as u64 ^ seed) as usize % 3).collect();
    for (c, l) in labels.iter_mut().take(3).enumerate() {
        *l = c;
    }
    let train: Vec<usize> = (0..n).filter(|&i| (seed >> (i % 64)) & 1 == 1 || i < 3).collect();
    let policy = if confident { MaskPolicy::Confident } else { MaskPolicy::First };
    let mask = build_mask_rows(&train, &labels, 3, policy, Some(out)).unwrap();
    prop_assert_eq!(mask.len(), 3);
    for (c, &m) in mask.iter().enumerate() {
        prop_assert!(train.contains(&m));
        prop_assert_eq!(labels[m], c);
    }
    let cfg = HighwayConfig {
        t_n: 0.0,
        t_p: 0.0,
        ..HighwayConfig::default()
    };
    for p in propose_edges(out, &cfg, &mask, &SparseGraph::empty(n)) {
        prop_assert!(mask.contains(&p.source));
        prop_assert_ne!(p.source, p.target);
    }
    Ok(())
}

pub fn dataset_with_counts(counts: &[usize]) -> Dataset {
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &k)| vec![c; k]).collect();
    let n = labels.len();
    Dataset::new(
        SparseGraph::empty(n),
        NodeFeatures::from_dense(&Array2::from_elem((n, 1), 1.0)),
        labels,
        (0..counts.len()).map(|c| format!("c{c}")).collect(),
        (0..n).map(|i| i.to_string()).collect(),
    )
    .unwrap()
}

pub fn check_split_counts(extra: &[usize], per_class: usize, seed: u64) -> Result<(), TestCaseError> {
    let counts: Vec<usize> = extra.iter().map(|c| c + per_class + VALID_PER_CLASS).collect();
    let ds = dataset_with_counts(&counts);
    let split = random_split(&ds, seed, per_class).unwrap();
    split.validate(ds.n()).unwrap();
    for (c, &k) in counts.iter().enumerate() {
        let count = |set: &[usize]| set.iter().filter(|&&i| ds.labels[i] == c).count();
        prop_assert_eq!(count(&split.train), per_class);
        prop_assert_eq!(count(&split.valid), VALID_PER_CLASS);
        prop_assert_eq!(count(&split.test), k - per_class - VALID_PER_CLASS);
    }
    prop_assert_eq!(&random_split(&ds, seed, per_class).unwrap(), &split);
    Ok(())
}

// ---- gradient oracle

pub struct Toy {
    pub graph: SparseGraph,
    pub x: NodeFeatures,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub pairs: PairSet,
}

/// Random 20-node graph with sparse non-negative features and 3 classes.
pub fn random_toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let edges: Vec<(usize, usize)> = (0..30)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .collect();
    let graph = SparseGraph::from_edges(n, edges).unwrap();
    let dense = Array2::from_shape_fn((n, 6), |_| {
        if rng.random::<f64>() < 0.5 {
            rng.random_range(0.1..1.0)
        } else {
            0.0
        }
    });
    let mut x = NodeFeatures::from_dense(&dense);
    x.l1_normalize();
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let train = vec![0, 1, 2, 3, 4, 5, 9];
    let pairs = sample_pairs(&train, &labels).unwrap();
    Toy {
        graph,
        x,
        labels,
        train,
        pairs,
    }
}

fn toy_loss(t: &Toy, p: &GcnParameters, lambda: f64, wpos: f64) -> f64 {
    let adj = t.graph.normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = forward(&adj, &t.x, p, 0.0, &mut rng, false).unwrap();
    combined_loss(
        node_loss(&out, &t.labels, &t.train),
        pair_loss(&out.logits.view(), &t.pairs, wpos),
        lambda,
    )
}

/// Largest relative deviation between the analytic gradient and central
/// differences (step 1e-5) over every weight. Entries whose magnitude is
/// below 1e-4 are compared absolutely.
pub fn gradient_max_relative_error(lambda: f64, seed: u64) -> f64 {
    let t = random_toy(seed);
    let wpos = t.pairs.auto_positive_weight();
    let mut p = init_parameters(6, 5, 3, seed);
    // scaled up so the pair term is well away from its linear regime
    p.w1 *= 3.0;
    p.w2 *= 3.0;
    let adj = t.graph.normalize();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, tape) = forward(&adj, &t.x, &p, 0.0, &mut rng, false).unwrap();
    let mut g = node_loss_grad(&out, &t.labels, &t.train);
    g.scaled_add(lambda, &pair_loss_grad(&out.logits.view(), &t.pairs, wpos));
    let grads = backward(&adj, &t.x, &p, &tape, &g);

    let h = 1e-5;
    let mut worst = 0.0f64;
    for layer in 0..2 {
        let (rows, cols) = if layer == 0 { p.w1.dim() } else { p.w2.dim() };
        for r in 0..rows {
            for c in 0..cols {
                let (mut plus, mut minus) = (p.clone(), p.clone());
                let (wp, wm, an) = if layer == 0 {
                    (&mut plus.w1, &mut minus.w1, grads.w1[[r, c]])
                } else {
                    (&mut plus.w2, &mut minus.w2, grads.w2[[r, c]])
                };
                wp[[r, c]] += h;
                wm[[r, c]] -= h;
                let fd = (toy_loss(&t, &plus, lambda, wpos) - toy_loss(&t, &minus, lambda, wpos)) / (2.0 * h);
                let denom = an.abs().max(fd.abs()).max(1e-4);
                worst = worst.max((an - fd).abs() / denom);
            }
        }
    }
    worst
}

// ---- λ = 0 equivalence

pub fn path_toy() -> (SparseGraph, NodeFeatures, Vec<usize>, Vec<usize>) {
    let g = SparseGraph::from_edges(8, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (0, 4)]).unwrap();
    let dense = Array2::from_shape_fn((8, 5), |(i, j)| if (i + j) % 3 == 0 { 1.0 } else { 0.0 });
    let mut x = NodeFeatures::from_dense(&dense);
    x.l1_normalize();
    (g, x, vec![0, 1, 0, 1, 0, 1, 0, 1], vec![0, 1, 2, 5])
}

/// Parameters after `epochs` steps of the combined-loss path with λ = 0
/// and of a hand-written node-loss-only loop, from the same start.
pub fn lambda_zero_runs(epochs: usize) -> (GcnParameters, GcnParameters) {
    let (g, x, labels, train) = path_toy();
    let adj = g.normalize();
    let pairs = sample_pairs(&train, &labels).unwrap();
    let cfg = HighwayConfig {
        lambda: 0.0,
        hidden: 4,
        ..HighwayConfig::default()
    };

    let mut joint = init_parameters(5, 4, 2, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..epochs {
        train_epoch(&adj, &x, &labels, &train, &pairs, 3.0, &cfg, &mut joint, &mut rng).unwrap();
    }

    let mut plain = init_parameters(5, 4, 2, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..epochs {
        let (out, tape) = forward(&adj, &x, &plain, cfg.dropout, &mut rng, true).unwrap();
        let grad = node_loss_grad(&out, &labels, &train);
        let grads = backward(&adj, &x, &plain, &tape, &grad);
        adam_step(&mut plain, &grads, cfg.lr, cfg.weight_decay);
    }
    (joint, plain)
}

pub fn bitwise_equal(a: &GcnParameters, b: &GcnParameters) -> bool {
    let bits = |p: &GcnParameters| -> Vec<u64> {
        [&p.w1, &p.w2, &p.m1, &p.v1, &p.m2, &p.v2]
            .iter()
            .flat_map(|m| m.iter().map(|v| v.to_bits()))
            .collect()
    };
    a.step == b.step && a.w1.dim() == b.w1.dim() && a.w2.dim() == b.w2.dim() && bits(a) == bits(b)
}

// ---- enumeration loss oracle

/// Hand-built 5-node instance: logits, labels, training nodes.
pub fn five_nodes() -> (ModelOutput, Vec<usize>, Vec<usize>) {
    let y = arr2(&[
        [0.5, -1.0, 2.0],
        [1.5, 0.3, -0.7],
        [-0.2, 0.8, 0.1],
        [0.0, -0.4, 1.2],
        [2.2, 0.6, -1.1],
    ]);
    (ModelOutput::from_logits(y), vec![2, 0, 1, 2, 0], vec![0, 1, 3, 4])
}

// Enumerated independently in double precision.
pub const FIVE_NODE_LOSS: f64 = 1.207_966_818_503_968;
pub const FIVE_PAIR_LOSS: f64 = 2.413_813_671_022_182_5;
pub const FIVE_PAIR_LOSS_W25: f64 = 3.005_575_644_786_772;

/// Deviations of node loss, pair loss (w⁺ = 1) and pair loss (w⁺ = 2.5).
pub fn five_node_deviations() -> [f64; 3] {
    let (out, labels, train) = five_nodes();
    let pairs = sample_pairs(&train, &labels).unwrap();
    [
        (node_loss(&out, &labels, &train) - FIVE_NODE_LOSS).abs(),
        (pair_loss(&out.logits.view(), &pairs, 1.0) - FIVE_PAIR_LOSS).abs(),
        (pair_loss(&out.logits.view(), &pairs, 2.5) - FIVE_PAIR_LOSS_W25).abs(),
    ]
}
