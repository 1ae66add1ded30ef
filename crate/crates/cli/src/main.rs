//! `highway` — convert citation datasets, train, and run the analyses.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use highway_core::dataio::{self, convert_citation_files, LoadOptions};
use highway_core::eval::{self, export_embeddings, run_matrix, GridPoint, HopBucketResult};
use highway_core::{
    highway_train, DataSplit, Dataset, HighwayConfig, HighwayError, PairSampling, PairStrategy, TrainingMode,
};

use report::{AnalysisReport, Fingerprint, HopsReport, RunReport, SplitInfo, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "highway", version, about = "GCN training with pair co-training and self-added edges")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert `.content` / `.cites` files into the canonical dataset layout.
    Convert(ConvertArgs),
    /// Train once and emit a JSON run report.
    Train(TrainArgs),
    /// Run a seed-matrix analysis and emit JSON (or TSV for embeddings).
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    cites: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CommonArgs {
    /// Canonical dataset directory.
    #[arg(long, env = "HIGHWAY_DATA_DIR")]
    data: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// typical, highway, no-joint or no-explicit.
    #[arg(long, default_value = "highway")]
    mode: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitKind {
    Random,
    Standard,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum, default_value = "random")]
    split: SplitKind,
    /// JSON split for `--split standard`; defaults to `split.json` in the data directory.
    #[arg(long)]
    split_file: Option<PathBuf>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    init_seed: Option<u64>,
    /// Pair sampling strategy; the full training grid when absent.
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pair_count: usize,
    /// Write the report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Hops,
    LambdaSweep,
    SizeSweep,
    SamplingSweep,
    Embeddings,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    what: Analysis,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    split_seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    init_seeds: Vec<u64>,
    /// λ grid (lambda-sweep default 0,0.5,1,2; size-sweep default 0,1).
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
    quotas: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "lead,random,close,middle,remote")]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "100000")]
    counts: Vec<usize>,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output path; required for embeddings, stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum CliError {
    Input(String),
    Config(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Config(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<HighwayError> for CliError {
    fn from(e: HighwayError) -> Self {
        match e {
            HighwayError::Config(_) => CliError::Config(e.to_string()),
            HighwayError::Shape(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Convert(a) => convert(a),
        Command::Train(a) => train(a),
        Command::Analyze(a) => analyze(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn convert(a: ConvertArgs) -> CliResult<()> {
    let s = convert_citation_files(&a.content, &a.cites, &a.out)?;
    println!(
        "{} nodes, {} edges, {} classes, {} features",
        s.nodes, s.edges, s.classes, s.features
    );
    println!(
        "dropped: {} dangling citations, {} self citations, {} duplicate citations, {} duplicate nodes",
        s.dangling_citations, s.self_citations, s.duplicate_citations, s.duplicate_nodes
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

/// Defaults, then the config file, then `--set` overrides.
fn resolve_config(common: &CommonArgs) -> CliResult<HighwayConfig> {
    let mut cfg = HighwayConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    Ok(cfg)
}

fn load(common: &CommonArgs, cfg: &HighwayConfig) -> CliResult<Dataset> {
    let opts = LoadOptions {
        normalize_features: cfg.normalize_features,
    };
    Ok(dataio::load_canonical_with(&common.data, opts)?)
}

fn parse_mode(s: &str) -> CliResult<TrainingMode> {
    Ok(s.parse::<TrainingMode>()?)
}

fn parse_strategy(s: &str) -> CliResult<PairStrategy> {
    Ok(s.parse::<PairStrategy>()?)
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{text}\n")).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))
}

fn train(a: TrainArgs) -> CliResult<()> {
    let start = Instant::now();
    let mode = parse_mode(&a.common.mode)?;
    let mut cfg = resolve_config(&a.common)?;
    if let Some(s) = a.split_seed {
        cfg.split_seed = s;
    }
    if let Some(s) = a.init_seed {
        cfg.init_seed = s;
    }
    let cfg = mode.apply(&cfg);
    cfg.validate()?;
    let sampling = match &a.sampling {
        None => PairSampling::FullGrid,
        Some(s) => PairSampling::Strategy {
            strategy: parse_strategy(s)?,
            count: a.pair_count,
        },
    };

    let ds = load(&a.common, &cfg)?;
    let (split, split_file): (DataSplit, Option<PathBuf>) = match a.split {
        SplitKind::Random => (dataio::random_split(&ds, cfg.split_seed, cfg.quota_per_class)?, None),
        SplitKind::Standard => {
            let path = a.split_file.clone().unwrap_or_else(|| a.common.data.join("split.json"));
            (dataio::standard_split(&ds, &path)?, Some(path))
        }
    };
    log::info!(
        "training {mode} on {} nodes ({} train / {} valid / {} test)",
        ds.n(),
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );
    let result = highway_train(&ds, &split, &cfg, sampling)?;

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        version: highway_core::VERSION,
        command: "train",
        mode,
        sampling,
        config: cfg,
        dataset: Fingerprint::of(&ds),
        split: SplitInfo {
            kind: match a.split {
                SplitKind::Random => "random",
                SplitKind::Standard => "standard",
            },
            file: split_file,
            train: split.train.len(),
            valid: split.valid.len(),
            test: split.test.len(),
        },
        selected_iteration: result.selected_iteration,
        valid_acc: result.valid_acc,
        test_acc: result.test_acc,
        iterations: result.iterations,
        threads: 1,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    eprintln!(
        "test accuracy {:.4} (valid {:.4}, iteration {})",
        report.test_acc, report.valid_acc, report.selected_iteration
    );
    write_output(a.report.as_deref(), &to_json(&report)?)
}

fn kv(k: &str, v: &str) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn analyze(a: AnalyzeArgs) -> CliResult<()> {
    let start = Instant::now();
    let mode = parse_mode(&a.common.mode)?;
    let cfg = resolve_config(&a.common)?;
    mode.apply(&cfg).validate()?;
    let ds = load(&a.common, &cfg)?;

    let lambdas = |default: &[&str]| -> Vec<String> {
        if a.lambdas.is_empty() {
            default.iter().map(|s| s.to_string()).collect()
        } else {
            a.lambdas.clone()
        }
    };
    let grid: Vec<GridPoint> = match a.what {
        Analysis::Hops => vec![GridPoint::new("base", vec![])],
        Analysis::LambdaSweep => lambdas(&["0", "0.5", "1", "2"])
            .iter()
            .map(|l| GridPoint::new(format!("lambda={l}"), vec![kv("lambda", l)]))
            .collect(),
        Analysis::SizeSweep => {
            let ls = lambdas(&["0", "1"]);
            a.quotas
                .iter()
                .flat_map(|q| {
                    ls.iter().map(move |l| {
                        GridPoint::new(
                            format!("quota={q},lambda={l}"),
                            vec![kv("quota_per_class", q), kv("lambda", l)],
                        )
                    })
                })
                .collect()
        }
        Analysis::SamplingSweep => {
            let mut points = Vec::new();
            for s in &a.strategies {
                let strategy = parse_strategy(s)?;
                for &count in &a.counts {
                    points.push(GridPoint {
                        label: format!("{strategy}:{count}"),
                        overrides: vec![],
                        sampling: PairSampling::Strategy { strategy, count },
                    });
                }
            }
            points
        }
        Analysis::Embeddings => return embeddings(&a, &ds, mode.apply(&cfg)),
    };

    let sweep = run_matrix(&ds, &cfg, mode, &a.split_seeds, &a.init_seeds, &grid, a.jobs)?;
    for p in &sweep.points {
        eprintln!("{}: {:.4} ± {:.4} ({} runs)", p.label, p.mean, p.std, p.runs);
    }
    let json = match a.what {
        Analysis::Hops => {
            let point = &sweep.points[0];
            let runs: Vec<HopBucketResult> = point.records.iter().map(|r| r.hop_buckets.clone()).collect();
            to_json(&AnalysisReport {
                schema_version: SCHEMA_VERSION,
                version: highway_core::VERSION,
                analysis: "hops",
                mode,
                config: mode.apply(&cfg),
                dataset: Fingerprint::of(&ds),
                split_seeds: a.split_seeds.clone(),
                init_seeds: a.init_seeds.clone(),
                threads: a.jobs,
                duration_secs: start.elapsed().as_secs_f64(),
                result: HopsReport {
                    pooled: HopBucketResult::pool(&runs),
                    mean_test_acc: point.mean,
                    std_test_acc: point.std,
                    runs,
                },
            })?
        }
        _ => to_json(&AnalysisReport {
            schema_version: SCHEMA_VERSION,
            version: highway_core::VERSION,
            analysis: match a.what {
                Analysis::LambdaSweep => "lambda-sweep",
                Analysis::SizeSweep => "size-sweep",
                _ => "sampling-sweep",
            },
            mode,
            config: mode.apply(&cfg),
            dataset: Fingerprint::of(&ds),
            split_seeds: a.split_seeds.clone(),
            init_seeds: a.init_seeds.clone(),
            threads: a.jobs,
            duration_secs: start.elapsed().as_secs_f64(),
            result: sweep,
        })?,
    };
    write_output(a.out.as_deref(), &json)
}

fn embeddings(a: &AnalyzeArgs, ds: &Dataset, cfg: HighwayConfig) -> CliResult<()> {
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| CliError::Input("--what embeddings needs --out PATH".into()))?;
    let split_seed = a.split_seeds.first().copied().unwrap_or(cfg.split_seed);
    let init_seed = a.init_seeds.first().copied().unwrap_or(cfg.init_seed);
    let cfg = HighwayConfig {
        split_seed,
        init_seed,
        ..cfg
    };
    let split = dataio::random_split(ds, split_seed, cfg.quota_per_class)?;
    let result = highway_train(ds, &split, &cfg, PairSampling::FullGrid)?;
    export_embeddings(&result.output, &ds.labels, out)?;
    eprintln!(
        "wrote {} rows to {} (test accuracy {:.4})",
        ds.n(),
        out.display(),
        eval::accuracy(&result.output, &ds.labels, &split.test)?
    );
    Ok(())
}
