//! Per-stage latency of baseline vs guided runs with a zero-latency model,
//! so the difference is the cost of detection and entity encoding.
//!
//! ```text
//! cargo run --release --example bench_overhead -- [repeats]
//! ```

use std::path::Path;
use std::sync::Arc;

use hazguard::dataset::{load_manifest, LoadMode};
use hazguard::detector::FilesDetector;
use hazguard::pipeline::{bench, BenchOptions, Pipeline};
use hazguard::vlm::{FnBackend, InferenceConfig};
use hazguard::PromptMode;

fn main() -> anyhow::Result<()> {
    let repeats = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(50);
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/site4");
    let manifest = load_manifest(&fixture.join("manifest.jsonl"), LoadMode::Evaluation)?;

    let vlm = Arc::new(FnBackend::new("instant", |_req: &_| Ok("Hazards: none".to_string())));
    let cfg = InferenceConfig::evaluation("none");
    let baseline = Pipeline::new(PromptMode::Baseline, vlm.clone(), cfg.clone());
    let guided = Pipeline::new(PromptMode::DetectionGuided, vlm, cfg)
        .with_detector(Arc::new(FilesDetector::new(fixture.join("detections"), 0.25)));

    let report = bench(
        &baseline,
        &guided,
        &manifest.records,
        &fixture,
        BenchOptions { repeats, warmup: 2 },
    )?;
    print!("{}", report.to_table());
    Ok(())
}
