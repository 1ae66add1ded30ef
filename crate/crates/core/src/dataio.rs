//! Canonical on-disk dataset format, conversion from the public
//! `.content`/`.cites` citation distributions, and train/valid/test splits.
//!
//! `nodes.tsv` holds one node per line:
//!
//! ```text
//! <string-id>\t<label-string>\t<idx>:<val> <idx>:<val> ...
//! ```
//!
//! with sparse feature entries in ascending index order, and `edges.tsv`
//! holds one undirected edge per line as `<string-id>\t<string-id>`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HighwayError, Result};
use crate::graph::SparseGraph;

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";

/// Validation nodes drawn per category in a random split.
pub const VALID_PER_CLASS: usize = 30;
/// Training nodes drawn per category in a random split unless overridden.
pub const TRAIN_PER_CLASS: usize = 20;

/// Node feature matrix stored as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    width: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NodeFeatures {
    /// Builds from per-row `(column, value)` lists. Zero values are dropped.
    pub fn from_rows(width: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                if c >= width {
                    return Err(HighwayError::Shape(format!(
                        "feature column {c} outside width {width}"
                    )));
                }
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(NodeFeatures {
            width,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(m: &Array2<f64>) -> Self {
        let rows = m
            .outer_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c, v))
                    .collect()
            })
            .collect();
        Self::from_rows(m.ncols(), rows).expect("columns bounded by matrix width")
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n(), self.width));
        for i in 0..self.n() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[i, c]] = v;
            }
        }
        out
    }

    /// Scales each nonzero row to unit L1 norm.
    pub fn l1_normalize(&mut self) {
        for i in 0..self.n() {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            let sum: f64 = self.values[r.clone()].iter().map(|v| v.abs()).sum();
            if sum > 0.0 {
                self.values[r].iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: SparseGraph,
    pub features: NodeFeatures,
    /// Category id per node, in `[0, num_classes)`.
    pub labels: Vec<usize>,
    /// Category id to label string.
    pub label_names: Vec<String>,
    pub node_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        graph: SparseGraph,
        features: NodeFeatures,
        labels: Vec<usize>,
        label_names: Vec<String>,
        node_ids: Vec<String>,
    ) -> Result<Self> {
        let n = graph.n();
        if n == 0 {
            return Err(HighwayError::EmptyDataset);
        }
        if features.n() != n || labels.len() != n || node_ids.len() != n {
            return Err(HighwayError::Shape(format!(
                "graph has {n} nodes, features {}, labels {}, ids {}",
                features.n(),
                labels.len(),
                node_ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(HighwayError::Shape(format!(
                "label {bad} outside {} categories",
                label_names.len()
            )));
        }
        Ok(Dataset {
            graph,
            features,
            labels,
            label_names,
            node_ids,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.width()
    }

    /// Nodes of each category, ascending.
    pub fn nodes_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub normalize_features: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            normalize_features: true,
        }
    }
}

/// Loads `nodes.tsv` and `edges.tsv` from `dir` with row-normalized features.
pub fn load_canonical(dir: impl AsRef<Path>) -> Result<Dataset> {
    load_canonical_with(dir, LoadOptions::default())
}

pub fn load_canonical_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<Dataset> {
    let dir = dir.as_ref();
    let nodes_path = dir.join(NODES_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let nodes_text = fs::read_to_string(&nodes_path).map_err(|e| HighwayError::io(&nodes_path, e))?;
    let edges_text = fs::read_to_string(&edges_path).map_err(|e| HighwayError::io(&edges_path, e))?;

    let mut node_ids = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut label_strings = Vec::new();
    let mut rows = Vec::new();
    let mut width = 0usize;

    for (lineno, line) in numbered_lines(&nodes_text) {
        let malformed = |message: String| HighwayError::Malformed {
            path: nodes_path.clone(),
            line: lineno,
            message,
        };
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or("").trim();
        let label = fields
            .next()
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed("expected `<id>\\t<label>\\t<features>`".into()))?;
        if id.is_empty() {
            return Err(malformed("empty node id".into()));
        }
        let feats = fields.next().unwrap_or("");
        if fields.next().is_some() {
            return Err(malformed("too many tab-separated fields".into()));
        }
        let mut row = Vec::new();
        let mut last: Option<usize> = None;
        for entry in feats.split_whitespace() {
            let (idx, val) = entry
                .split_once(':')
                .ok_or_else(|| malformed(format!("feature entry `{entry}` is not idx:val")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| malformed(format!("bad feature index in `{entry}`")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| malformed(format!("bad feature value in `{entry}`")))?;
            if !val.is_finite() {
                return Err(malformed(format!("non-finite feature value in `{entry}`")));
            }
            if last.is_some_and(|l| idx <= l) {
                return Err(malformed("feature indices must be strictly ascending".into()));
            }
            last = Some(idx);
            width = width.max(idx + 1);
            row.push((idx, val));
        }
        if index.insert(id.to_string(), node_ids.len()).is_some() {
            return Err(malformed(format!("duplicate node id `{id}`")));
        }
        node_ids.push(id.to_string());
        label_strings.push(label.to_string());
        rows.push(row);
    }
    if node_ids.is_empty() {
        return Err(HighwayError::EmptyDataset);
    }

    let label_names: Vec<String> = label_strings
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let label_index: HashMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let labels = label_strings.iter().map(|s| label_index[s.as_str()]).collect();

    let mut edges = Vec::new();
    for (lineno, line) in numbered_lines(&edges_text) {
        let mut fields = line.split_whitespace();
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(HighwayError::Malformed {
                    path: edges_path.clone(),
                    line: lineno,
                    message: "expected `<id>\\t<id>`".into(),
                })
            }
        };
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| HighwayError::UnknownNode {
                path: edges_path.clone(),
                line: lineno,
                id: id.to_string(),
            })
        };
        edges.push((lookup(a)?, lookup(b)?));
    }

    let n = node_ids.len();
    let graph = SparseGraph::from_edges(n, edges)?;
    let mut features = NodeFeatures::from_rows(width, rows)?;
    if opts.normalize_features {
        features.l1_normalize();
    }
    Dataset::new(graph, features, labels, label_names, node_ids)
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Counts reported by [`convert_citation_files`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ConvertSummary {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub features: usize,
    pub dangling_citations: usize,
    pub self_citations: usize,
    pub duplicate_citations: usize,
    pub duplicate_nodes: usize,
}

/// Converts a `.content` file (`<id>\t<feat...>\t<label>`, dense) and a
/// `.cites` file (`<id>\t<id>`) into the canonical format under `out_dir`.
///
/// Citations naming an id absent from the content file are dropped and
/// counted. Repeated content ids keep their first row.
pub fn convert_citation_files(
    content: impl AsRef<Path>,
    cites: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
) -> Result<ConvertSummary> {
    let content = content.as_ref();
    let cites = cites.as_ref();
    let out_dir = out_dir.as_ref();
    let content_text = fs::read_to_string(content).map_err(|e| HighwayError::io(content, e))?;
    let cites_text = fs::read_to_string(cites).map_err(|e| HighwayError::io(cites, e))?;

    let mut summary = ConvertSummary::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut width: Option<usize> = None;
    let mut labels = BTreeSet::new();
    let mut node_lines = Vec::new();

    for (lineno, line) in numbered_lines(&content_text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(HighwayError::Malformed {
                path: content.to_path_buf(),
                line: lineno,
                message: "expected `<id>\\t<features...>\\t<label>`".into(),
            });
        }
        let id = fields[0];
        let label = fields[fields.len() - 1];
        let dense = &fields[1..fields.len() - 1];
        match width {
            None => width = Some(dense.len()),
            Some(w) if w != dense.len() => {
                return Err(HighwayError::FeatureWidth {
                    path: content.to_path_buf(),
                    line: lineno,
                    expected: w,
                    found: dense.len(),
                })
            }
            Some(_) => {}
        }
        if !seen.insert(id.to_string()) {
            summary.duplicate_nodes += 1;
            continue;
        }
        let mut sparse = Vec::new();
        for (k, tok) in dense.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| HighwayError::Malformed {
                path: content.to_path_buf(),
                line: lineno,
                message: format!("feature {k} is not a number: `{tok}`"),
            })?;
            if v != 0.0 {
                sparse.push(format!("{k}:{v}"));
            }
        }
        labels.insert(label.to_string());
        node_lines.push(format!("{id}\t{label}\t{}", sparse.join(" ")));
    }
    if node_lines.is_empty() {
        return Err(HighwayError::EmptyDataset);
    }

    let mut edge_set: HashSet<(String, String)> = HashSet::new();
    let mut edge_lines = Vec::new();
    for (lineno, line) in numbered_lines(&cites_text) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(HighwayError::Malformed {
                path: cites.to_path_buf(),
                line: lineno,
                message: "expected `<id>\\t<id>`".into(),
            });
        }
        let (a, b) = (fields[0], fields[1]);
        if !seen.contains(a) || !seen.contains(b) {
            summary.dangling_citations += 1;
            continue;
        }
        if a == b {
            summary.self_citations += 1;
            continue;
        }
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        if !edge_set.insert(key) {
            summary.duplicate_citations += 1;
            continue;
        }
        edge_lines.push(format!("{a}\t{b}"));
    }

    fs::create_dir_all(out_dir).map_err(|e| HighwayError::io(out_dir, e))?;
    write_lines(&out_dir.join(NODES_FILE), &node_lines)?;
    write_lines(&out_dir.join(EDGES_FILE), &edge_lines)?;

    summary.nodes = node_lines.len();
    summary.edges = edge_lines.len();
    summary.classes = labels.len();
    summary.features = width.unwrap_or(0);
    Ok(summary)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| HighwayError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for l in lines {
        writeln!(w, "{l}").map_err(|e| HighwayError::io(path, e))?;
    }
    w.flush().map_err(|e| HighwayError::io(path, e))
}

/// Disjoint train/valid/test node sets, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DataSplit {
    /// Checks bounds and pairwise disjointness against `n` nodes.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner = vec![None; n];
        for (name, set) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for &i in set {
                if i >= n {
                    return Err(HighwayError::IndexOutOfRange { index: i, n });
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(HighwayError::InvalidSplit(format!(
                        "node {i} appears in both {prev} and {name}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Stratified random split: per category, `train_per_class` training nodes,
/// then [`VALID_PER_CLASS`] validation nodes, remainder to test.
pub fn random_split(ds: &Dataset, seed: u64, train_per_class: usize) -> Result<DataSplit> {
    let required = train_per_class + VALID_PER_CLASS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DataSplit {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
        seed: Some(seed),
    };
    for (class, mut nodes) in ds.nodes_by_class().into_iter().enumerate() {
        if nodes.len() < required {
            return Err(HighwayError::CategoryTooSmall {
                category: ds.label_names[class].clone(),
                available: nodes.len(),
                required,
            });
        }
        nodes.shuffle(&mut rng);
        split.train.extend_from_slice(&nodes[..train_per_class]);
        split.valid.extend_from_slice(&nodes[train_per_class..required]);
        split.test.extend_from_slice(&nodes[required..]);
    }
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Deserialize)]
struct SplitFile {
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

/// Loads a fixed split from a JSON object with integer arrays `train`,
/// `valid` and `test`.
pub fn standard_split(ds: &Dataset, path: impl AsRef<Path>) -> Result<DataSplit> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let text = fs::read_to_string(&path).map_err(|e| HighwayError::io(&path, e))?;
    let file: SplitFile =
        serde_json::from_str(&text).map_err(|source| HighwayError::Json { path, source })?;
    let mut split = DataSplit {
        train: file.train,
        valid: file.valid,
        test: file.test,
        seed: None,
    };
    split.train.sort_unstable();
    split.valid.sort_unstable();
    split.test.sort_unstable();
    for set in [&split.train, &split.valid, &split.test] {
        if set.windows(2).any(|w| w[0] == w[1]) {
            return Err(HighwayError::InvalidSplit("repeated node index".into()));
        }
    }
    split.validate(ds.n())?;
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_two_node_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), NODES_FILE, "a\tx\t0:1 2:3\nb\ty\t1:2\n");
        write(dir.path(), EDGES_FILE, "a\tb\nb\ta\n");
        let ds = load_canonical(dir.path()).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.graph.num_edges(), 1);
        assert!(ds.graph.has_edge(0, 1) && ds.graph.has_edge(1, 0));
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.num_features(), 3);
        let (_, vals) = ds.features.row(0);
        assert_eq!(vals, &[0.25, 0.75]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), NODES_FILE, "a\tx\t0:1\nb\ty\t1-2\n");
        write(dir.path(), EDGES_FILE, "");
        match load_canonical(dir.path()).unwrap_err() {
            HighwayError::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_edge_endpoint() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), NODES_FILE, "a\tx\t0:1\n");
        write(dir.path(), EDGES_FILE, "a\tzz\n");
        assert!(matches!(
            load_canonical(dir.path()).unwrap_err(),
            HighwayError::UnknownNode { line: 1, .. }
        ));
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), NODES_FILE, "\n");
        write(dir.path(), EDGES_FILE, "");
        assert!(matches!(
            load_canonical(dir.path()).unwrap_err(),
            HighwayError::EmptyDataset
        ));
    }

    #[test]
    fn convert_dense_rows_and_dangling_cite() {
        let dir = tempfile::tempdir().unwrap();
        let content = write(
            dir.path(),
            "x.content",
            "p1\t0\t1\t0\tA\np2\t1\t0\t0\tB\np3\t0\t0\t1\tA\n",
        );
        let cites = write(dir.path(), "x.cites", "p1\tp2\np2\tp3\np9\tp1\n");
        let out = dir.path().join("out");
        let summary = convert_citation_files(&content, &cites, &out).unwrap();
        assert_eq!(summary.nodes, 3);
        assert_eq!(summary.dangling_citations, 1);
        assert_eq!(summary.edges, 2);
        let nodes = fs::read_to_string(out.join(NODES_FILE)).unwrap();
        assert_eq!(nodes, "p1\tA\t1:1\np2\tB\t0:1\np3\tA\t2:1\n");
    }

    #[test]
    fn convert_rejects_inconsistent_width() {
        let dir = tempfile::tempdir().unwrap();
        let content = write(dir.path(), "x.content", "p1\t0\t1\tA\np2\t1\tB\n");
        let cites = write(dir.path(), "x.cites", "");
        assert!(matches!(
            convert_citation_files(&content, &cites, dir.path().join("o")).unwrap_err(),
            HighwayError::FeatureWidth { line: 2, expected: 2, found: 1, .. }
        ));
    }

    #[test]
    fn convert_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = convert_citation_files(
            dir.path().join("nope.content"),
            dir.path().join("nope.cites"),
            dir.path().join("o"),
        )
        .unwrap_err();
        assert!(matches!(err, HighwayError::Io { .. }));
    }

    fn toy_dataset(per_class: &[usize]) -> Dataset {
        let labels: Vec<usize> = per_class
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect();
        let n = labels.len();
        let features = NodeFeatures::from_rows(1, vec![vec![(0, 1.0)]; n]).unwrap();
        Dataset::new(
            SparseGraph::empty(n),
            features,
            labels,
            (0..per_class.len()).map(|c| format!("c{c}")).collect(),
            (0..n).map(|i| i.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn random_split_counts_and_determinism() {
        let ds = toy_dataset(&[60, 75, 90]);
        let s = random_split(&ds, 7, TRAIN_PER_CLASS).unwrap();
        assert_eq!(s.train.len(), 60);
        assert_eq!(s.valid.len(), 90);
        assert_eq!(s.test.len(), ds.n() - 150);
        s.validate(ds.n()).unwrap();
        assert_eq!(s, random_split(&ds, 7, TRAIN_PER_CLASS).unwrap());
        assert_ne!(s.train, random_split(&ds, 8, TRAIN_PER_CLASS).unwrap().train);
    }

    #[test]
    fn random_split_quota_override() {
        let ds = toy_dataset(&[80, 80]);
        let s = random_split(&ds, 1, 50).unwrap();
        assert_eq!(s.train.len(), 100);
        assert!(matches!(
            random_split(&toy_dataset(&[79, 80]), 1, 50),
            Err(HighwayError::CategoryTooSmall { available: 79, required: 80, .. })
        ));
    }

    #[test]
    fn standard_split_roundtrip_and_overlap() {
        let ds = toy_dataset(&[2, 1]);
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "s.json", r#"{"train":[0],"valid":[1],"test":[2]}"#);
        let s = standard_split(&ds, ok).unwrap();
        assert_eq!((s.train, s.valid, s.test), (vec![0], vec![1], vec![2]));

        let bad = write(dir.path(), "b.json", r#"{"train":[0],"valid":[1],"test":[0]}"#);
        assert!(matches!(
            standard_split(&ds, bad).unwrap_err(),
            HighwayError::InvalidSplit(_)
        ));
        let oob = write(dir.path(), "c.json", r#"{"train":[5],"valid":[],"test":[]}"#);
        assert!(matches!(
            standard_split(&ds, oob).unwrap_err(),
            HighwayError::IndexOutOfRange { index: 5, n: 3 }
        ));
    }
}
