//! Compares the training modes on a generated dataset.
//!
//! `cargo run --release -p highway-core --example synthetic_modes`

use highway_core::eval::run_matrix;
use highway_core::eval::GridPoint;
use highway_core::synthetic::{generate, SyntheticSpec};
use highway_core::{HighwayConfig, TrainingMode};

fn main() -> highway_core::Result<()> {
    let topic_prob: f64 = std::env::var("TOPIC").ok().and_then(|v| v.parse().ok()).unwrap_or(0.3);
    let homophily: f64 = std::env::var("HOMO").ok().and_then(|v| v.parse().ok()).unwrap_or(0.85);
    let ds = generate(&SyntheticSpec { topic_prob, homophily, ..SyntheticSpec::default() })?;
    let base = HighwayConfig::default();
    let grid = [GridPoint::new("default", vec![])];
    for mode in TrainingMode::ALL {
        let t = std::time::Instant::now();
        let res = run_matrix(&ds, &base, mode, &[0, 1, 2], &[0, 1], &grid, 1)?;
        let p = &res.points[0];
        let iters: Vec<usize> = p.records.iter().map(|r| r.iterations).collect();
        let far: Vec<String> = p
            .records
            .iter()
            .map(|r| format!("{:.2}", r.hop_buckets.accuracy_at_least(3).unwrap_or(f64::NAN)))
            .collect();
        println!(
            "{mode:<12} test {:.4} ± {:.4}  iterations {iters:?} far {far:?} ({:.1?})",
            p.mean,
            p.std,
            t.elapsed()
        );
    }
    Ok(())
}
