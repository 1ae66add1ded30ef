use std::path::PathBuf;

use highway_core::eval::HopBucketResult;
use highway_core::{Dataset, HighwayConfig, IterationReport, PairSampling, TrainingMode};
use serde::Serialize;

/// Bumped on any incompatible change to the report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Fingerprint {
    pub nodes: usize,
    pub edges: usize,
    pub classes: usize,
    pub features: usize,
}

impl Fingerprint {
    pub fn of(ds: &Dataset) -> Self {
        Fingerprint {
            nodes: ds.n(),
            edges: ds.graph.num_edges(),
            classes: ds.num_classes(),
            features: ds.num_features(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SplitInfo {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

/// Output of `train`. Everything except `duration_secs` is a function of
/// the echoed config, seeds and dataset.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'static str,
    pub mode: TrainingMode,
    pub sampling: PairSampling,
    pub config: HighwayConfig,
    pub dataset: Fingerprint,
    pub split: SplitInfo,
    pub iterations: Vec<IterationReport>,
    pub selected_iteration: usize,
    pub valid_acc: f64,
    pub test_acc: f64,
    pub threads: usize,
    pub duration_secs: f64,
}

#[derive(Debug, Serialize)]
pub struct HopsReport {
    pub pooled: HopBucketResult,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub runs: Vec<HopBucketResult>,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport<R: Serialize> {
    pub schema_version: u32,
    pub version: &'static str,
    pub analysis: &'static str,
    pub mode: TrainingMode,
    pub config: HighwayConfig,
    pub dataset: Fingerprint,
    pub split_seeds: Vec<u64>,
    pub init_seeds: Vec<u64>,
    pub threads: usize,
    pub duration_secs: f64,
    pub result: R,
}
