//! Metrics and experiment aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::HighwayConfig;
use crate::dataio::{random_split, Dataset};
use crate::error::{HighwayError, Result};
use crate::gcn::ModelOutput;
use crate::graph::{hop_distances, HopDistanceMap, Hops};
use crate::highway::{highway_train, EdgeProposal, PairSampling, TrainingMode};

/// Fraction of `nodes` whose predicted label equals the gold label.
pub fn accuracy(output: &ModelOutput, labels: &[usize], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(HighwayError::EmptySet);
    }
    let correct = nodes
        .iter()
        .filter(|&&i| output.predicted[i] == labels[i])
        .count();
    Ok(correct as f64 / nodes.len() as f64)
}

/// Distances at or beyond this merge into one bucket.
pub const MERGED_HOPS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopBucket {
    Exact(u32),
    AtLeast(u32),
    Unreachable,
}

impl HopBucket {
    pub fn of(hops: Hops) -> Self {
        match hops {
            Hops::Finite(d) if d >= MERGED_HOPS => HopBucket::AtLeast(MERGED_HOPS),
            Hops::Finite(d) => HopBucket::Exact(d),
            Hops::Unreachable => HopBucket::Unreachable,
        }
    }
}

impl fmt::Display for HopBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HopBucket::Exact(d) => write!(f, "{d}"),
            HopBucket::AtLeast(d) => write!(f, ">={d}"),
            HopBucket::Unreachable => f.pad("unreachable"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketStats {
    pub bucket: HopBucket,
    pub label: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy per hop-distance bucket; only non-empty buckets are listed, in
/// ascending distance order with `unreachable` last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopBucketResult {
    pub buckets: Vec<BucketStats>,
}

impl HopBucketResult {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    /// Merges per-run results by summing counts per bucket.
    pub fn pool<'a>(results: impl IntoIterator<Item = &'a HopBucketResult>) -> HopBucketResult {
        let mut tally: BTreeMap<HopBucket, (usize, usize)> = BTreeMap::new();
        for r in results {
            for b in &r.buckets {
                let e = tally.entry(b.bucket).or_default();
                e.0 += b.count;
                e.1 += b.correct;
            }
        }
        HopBucketResult::from_tally(tally)
    }

    fn from_tally(tally: BTreeMap<HopBucket, (usize, usize)>) -> HopBucketResult {
        HopBucketResult {
            buckets: tally
                .into_iter()
                .map(|(bucket, (count, correct))| BucketStats {
                    bucket,
                    label: bucket.to_string(),
                    count,
                    correct,
                    accuracy: correct as f64 / count as f64,
                })
                .collect(),
        }
    }

    /// Pooled accuracy over finite buckets at distance `>= min_hops`.
    pub fn accuracy_at_least(&self, min_hops: u32) -> Option<f64> {
        let (count, correct) = self
            .buckets
            .iter()
            .filter(|b| match b.bucket {
                HopBucket::Exact(d) | HopBucket::AtLeast(d) => d >= min_hops,
                HopBucket::Unreachable => false,
            })
            .fold((0, 0), |(n, c), b| (n + b.count, c + b.correct));
        (count > 0).then(|| correct as f64 / count as f64)
    }
}

pub fn hop_bucket_accuracy(
    output: &ModelOutput,
    labels: &[usize],
    nodes: &[usize],
    hops: &HopDistanceMap,
) -> HopBucketResult {
    let mut tally: BTreeMap<HopBucket, (usize, usize)> = BTreeMap::new();
    for &i in nodes {
        let e = tally.entry(HopBucket::of(hops.get(i))).or_default();
        e.0 += 1;
        if output.predicted[i] == labels[i] {
            e.1 += 1;
        }
    }
    HopBucketResult::from_tally(tally)
}

/// Fraction of proposals joining same-category nodes; `None` when empty.
pub fn edge_precision(proposals: &[EdgeProposal], labels: &[usize]) -> Option<f64> {
    if proposals.is_empty() {
        return None;
    }
    let good = proposals
        .iter()
        .filter(|p| labels[p.source] == labels[p.target])
        .count();
    Some(good as f64 / proposals.len() as f64)
}

/// Writes `index \t label \t y_0 ... y_{C-1}` per node.
pub fn export_embeddings(output: &ModelOutput, labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| HighwayError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, row) in output.logits.outer_iter().enumerate() {
        let mut line = format!("{i}\t{}", labels[i]);
        for v in row {
            line.push('\t');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(|e| HighwayError::io(path, e))?;
    }
    w.flush().map_err(|e| HighwayError::io(path, e))
}

/// Reads a file written by [`export_embeddings`] back as `(labels, logits)`.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(Vec<usize>, Array2<f64>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HighwayError::io(path, e))?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let malformed = |m: &str| HighwayError::Malformed {
            path: path.to_path_buf(),
            line: lineno + 1,
            message: m.to_string(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 || *width.get_or_insert(fields.len()) != fields.len() {
            return Err(malformed("inconsistent column count"));
        }
        labels.push(fields[1].parse().map_err(|_| malformed("bad label"))?);
        for f in &fields[2..] {
            values.push(f.parse::<f64>().map_err(|_| malformed("bad value"))?);
        }
    }
    let cols = width.map_or(0, |w| w - 2);
    let logits = Array2::from_shape_vec((labels.len(), cols), values)
        .map_err(|e| HighwayError::Shape(e.to_string()))?;
    Ok((labels, logits))
}

/// One setting in a sweep: config overrides plus the pair sampling mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub label: String,
    pub overrides: Vec<(String, String)>,
    pub sampling: PairSampling,
}

impl GridPoint {
    pub fn new(label: impl Into<String>, overrides: Vec<(String, String)>) -> Self {
        GridPoint {
            label: label.into(),
            overrides,
            sampling: PairSampling::FullGrid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub split_seed: u64,
    pub init_seed: u64,
    pub valid_acc: f64,
    pub test_acc: f64,
    pub iterations: usize,
    pub edges_added: usize,
    /// Pooled test accuracy per hop bucket.
    pub hop_buckets: HopBucketResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub label: String,
    pub overrides: Vec<(String, String)>,
    pub sampling: PairSampling,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub records: Vec<RunRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub mode: TrainingMode,
    pub points: Vec<SweepPoint>,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every grid point for every `(split seed, init seed)` combination
/// and aggregates test accuracy. Up to `jobs` runs execute concurrently;
/// records are stored in seed order so the summary does not depend on
/// scheduling.
pub fn run_matrix(
    ds: &Dataset,
    base: &HighwayConfig,
    mode: TrainingMode,
    split_seeds: &[u64],
    init_seeds: &[u64],
    grid: &[GridPoint],
    jobs: usize,
) -> Result<SweepResult> {
    if split_seeds.is_empty() || init_seeds.is_empty() {
        return Err(HighwayError::Config("need at least one split seed and one init seed".into()));
    }
    let mut configs = Vec::with_capacity(grid.len());
    for point in grid {
        let mut cfg = base.clone();
        for (k, v) in &point.overrides {
            cfg.set(k, v)?;
        }
        let cfg = mode.apply(&cfg);
        cfg.validate()?;
        configs.push(cfg);
    }

    let tasks: Vec<(usize, u64, u64)> = (0..grid.len())
        .flat_map(|g| {
            split_seeds
                .iter()
                .flat_map(move |&s| init_seeds.iter().map(move |&i| (g, s, i)))
        })
        .collect();
    let results: Mutex<Vec<Option<Result<RunRecord>>>> =
        Mutex::new((0..tasks.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(g, split_seed, init_seed)) = tasks.get(k) else { break };
        let record = single_run(ds, &configs[g], grid[g].sampling, split_seed, init_seed);
        results.lock().expect("no worker panics while holding the lock")[k] = Some(record);
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }

    let mut records = results.into_inner().expect("workers joined").into_iter();
    let per_point = split_seeds.len() * init_seeds.len();
    let mut points = Vec::with_capacity(grid.len());
    for point in grid {
        let recs: Vec<RunRecord> = records
            .by_ref()
            .take(per_point)
            .map(|r| r.expect("every task ran"))
            .collect::<Result<_>>()?;
        let accs: Vec<f64> = recs.iter().map(|r| r.test_acc).collect();
        let (mean, std) = mean_std(&accs);
        points.push(SweepPoint {
            label: point.label.clone(),
            overrides: point.overrides.clone(),
            sampling: point.sampling,
            mean,
            std,
            runs: recs.len(),
            records: recs,
        });
    }
    Ok(SweepResult { mode, points })
}

fn single_run(
    ds: &Dataset,
    cfg: &HighwayConfig,
    sampling: PairSampling,
    split_seed: u64,
    init_seed: u64,
) -> Result<RunRecord> {
    let cfg = HighwayConfig {
        split_seed,
        init_seed,
        ..cfg.clone()
    };
    let split = random_split(ds, split_seed, cfg.quota_per_class)?;
    let result = highway_train(ds, &split, &cfg, sampling)?;
    let hops = hop_distances(&ds.graph, &ds.labels, &split.train)?;
    Ok(RunRecord {
        split_seed,
        init_seed,
        valid_acc: result.valid_acc,
        test_acc: result.test_acc,
        iterations: result.iterations.len(),
        edges_added: result.iterations.iter().map(|r| r.edges_added).sum(),
        hop_buckets: hop_bucket_accuracy(&result.output, &ds.labels, &split.test, &hops),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SparseGraph;
    use crate::highway::Decision;
    use ndarray::arr2;

    fn out(predicted: &[usize]) -> ModelOutput {
        let mut o = ModelOutput::from_logits(Array2::zeros((predicted.len(), 2)));
        o.predicted = predicted.to_vec();
        o
    }

    #[test]
    fn accuracy_examples() {
        let labels = [0, 1, 1, 0];
        assert_eq!(accuracy(&out(&[0, 1, 1, 0]), &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&out(&[1, 0, 0, 1]), &labels, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&out(&[0, 1, 1, 1]), &labels, &[0, 1, 2, 3]).unwrap(), 0.75);
        assert!(matches!(accuracy(&out(&[0]), &labels, &[]), Err(HighwayError::EmptySet)));
    }

    #[test]
    fn single_bucket_when_everything_is_adjacent() {
        let g = SparseGraph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        let labels = [0, 0, 0];
        let hops = hop_distances(&g, &labels, &[0]).unwrap();
        let r = hop_bucket_accuracy(&out(&[0, 0, 0]), &labels, &[1, 2], &hops);
        assert_eq!(r.buckets.len(), 1);
        assert_eq!(r.buckets[0].bucket, HopBucket::Exact(1));
        assert_eq!(r.buckets[0].accuracy, 1.0);
    }

    #[test]
    fn far_buckets_merge() {
        let edges: Vec<(usize, usize)> = (0..9).map(|i| (i, i + 1)).collect();
        let g = SparseGraph::from_edges(11, edges).unwrap();
        let labels = vec![0; 11];
        let hops = hop_distances(&g, &labels, &[0]).unwrap();
        let nodes: Vec<usize> = (1..11).collect();
        let r = hop_bucket_accuracy(&out(&[0; 11]), &labels, &nodes, &hops);
        let labels: Vec<&str> = r.buckets.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["1", "2", "3", "4", "5", ">=6", "unreachable"]);
        assert_eq!(r.buckets[5].count, 4);
        assert_eq!(r.total(), 10);
        assert_eq!(r.accuracy_at_least(4), Some(1.0));

        let mut wrong = out(&[0; 11]);
        wrong.predicted[1] = 1;
        let s = hop_bucket_accuracy(&wrong, &[0; 11], &[1, 2], &hops);
        let pooled = HopBucketResult::pool([&r, &s]);
        assert_eq!(pooled.total(), 12);
        assert_eq!(pooled.buckets[0].count, 2);
        assert_eq!(pooled.buckets[0].accuracy, 0.5);
    }

    #[test]
    fn precision_examples() {
        let labels = [0, 0, 1, 1];
        let p = |s, t| EdgeProposal {
            source: s,
            target: t,
            decision: Decision::Both,
        };
        assert_eq!(edge_precision(&[p(0, 1), p(2, 3)], &labels), Some(1.0));
        assert_eq!(edge_precision(&[p(0, 2), p(1, 3)], &labels), Some(0.0));
        assert_eq!(edge_precision(&[p(0, 1), p(2, 3), p(3, 2), p(1, 2)], &labels), Some(0.75));
        assert_eq!(edge_precision(&[], &labels), None);
    }

    #[test]
    fn embeddings_round_trip() {
        let o = ModelOutput::from_logits(arr2(&[[0.1, -2.5, 1e-17], [3.0, 0.3333333333333333, -0.0]]));
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        export_embeddings(&o, &[2, 0], &a).unwrap();
        export_embeddings(&o, &[2, 0], &b).unwrap();
        let text = fs::read_to_string(&a).unwrap();
        assert_eq!(text, fs::read_to_string(&b).unwrap());
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.split('\t').count() == 5));
        let (labels, logits) = read_embeddings(&a).unwrap();
        assert_eq!(labels, vec![2, 0]);
        assert_eq!(logits, o.logits);
    }

    #[test]
    fn mean_std_single_value() {
        assert_eq!(mean_std(&[0.8]), (0.8, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
