//! Baseline and detection-guided runs over the recorded site fixture, then
//! the comparison table. No model server needed: responses come from
//! transcripts keyed by request digest.
//!
//! ```text
//! cargo run --example replay_pipeline
//! ```

use std::path::Path;
use std::sync::Arc;

use hazguard::dataset::{load_manifest, LoadMode};
use hazguard::detector::FilesDetector;
use hazguard::pipeline::{compare_reports, Pipeline};
use hazguard::vlm::{HashingEmbedder, InferenceConfig, ReplayBackend};
use hazguard::PromptMode;

fn main() -> anyhow::Result<()> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/site4");
    let manifest = load_manifest(&fixture.join("manifest.jsonl"), LoadMode::Evaluation)?;
    let replay = Arc::new(ReplayBackend::new(fixture.join("transcripts")));
    let files = Arc::new(FilesDetector::new(fixture.join("detections"), 0.25));
    let cfg = InferenceConfig::evaluation("fixture-vlm");

    let embedder = Arc::new(HashingEmbedder::default());

    let baseline = Pipeline::new(PromptMode::Baseline, replay.clone(), cfg.clone())
        .with_embedder(embedder.clone())
        .run(&manifest.records, &fixture)?;
    let guided = Pipeline::new(PromptMode::DetectionGuided, replay, cfg)
        .with_detector(files)
        .with_embedder(embedder)
        .run(&manifest.records, &fixture)?;

    for r in &guided.per_image {
        let ents = r.detections.as_ref().map(|d| d.entities.as_str()).unwrap_or("");
        println!("{}  {}", r.image, ents);
    }
    println!();
    print!("{}", compare_reports(&baseline, &guided)?.to_table());
    Ok(())
}
