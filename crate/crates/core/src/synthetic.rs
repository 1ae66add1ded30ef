//! Seeded generator for small citation-style datasets.
//!
//! Nodes of each category sit on their own ring and cite mostly nearby
//! ring members, so same-category nodes can be many hops apart. Features are
//! sparse bags of words drawn from a category topic mixed with background
//! vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataio::{Dataset, NodeFeatures};
use crate::error::Result;
use crate::graph::SparseGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    /// Vocabulary size.
    pub features: usize,
    pub words_per_node: usize,
    /// Probability a word comes from the node's category topic.
    pub topic_prob: f64,
    /// Topic vocabulary size per category.
    pub topic_words: usize,
    /// Citations emitted per node.
    pub links_per_node: usize,
    /// Probability a citation stays within the category.
    pub homophily: f64,
    /// Ring neighborhood that intra-category citations are drawn from.
    pub locality: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 4,
            nodes_per_class: 150,
            features: 400,
            words_per_node: 12,
            topic_prob: 0.3,
            topic_words: 40,
            links_per_node: 2,
            homophily: 0.85,
            locality: 6,
            seed: 0,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let per = spec.nodes_per_class;
    let n = spec.classes * per;
    let labels: Vec<usize> = (0..n).map(|i| i / per).collect();

    let mut edges = Vec::new();
    for (i, &class) in labels.iter().enumerate() {
        let pos = i % per;
        for _ in 0..spec.links_per_node {
            if rng.random::<f64>() < spec.homophily {
                let step = rng.random_range(1..=spec.locality.max(1));
                let target = if rng.random::<bool>() { pos + step } else { pos + per - step % per };
                edges.push((i, class * per + target % per));
            } else {
                edges.push((i, rng.random_range(0..n)));
            }
        }
    }
    let graph = SparseGraph::from_edges(n, edges)?;

    let mut rows = Vec::with_capacity(n);
    for &class in &labels {
        let mut row: Vec<(usize, f64)> = Vec::new();
        for _ in 0..spec.words_per_node {
            let word = if rng.random::<f64>() < spec.topic_prob {
                (class * spec.topic_words + rng.random_range(0..spec.topic_words)) % spec.features
            } else {
                rng.random_range(0..spec.features)
            };
            if !row.iter().any(|&(w, _)| w == word) {
                row.push((word, 1.0));
            }
        }
        rows.push(row);
    }
    let mut features = NodeFeatures::from_rows(spec.features, rows)?;
    features.l1_normalize();

    Dataset::new(
        graph,
        features,
        labels,
        (0..spec.classes).map(|c| format!("class{c}")).collect(),
        (0..n).map(|i| format!("n{i}")).collect(),
    )
}
