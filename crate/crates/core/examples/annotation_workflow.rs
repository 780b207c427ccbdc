//! Draft labels from a model, annotator verdicts with history, and a seeded
//! train/val/test split. Everything is written to a temporary directory.
//!
//! ```text
//! cargo run --example annotation_workflow
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{TimeZone, Utc};
use hazguard::category::CategorySet;
use hazguard::dataset::{
    generate_annotation_draft, load_manifest, split_dataset, LoadMode, Manifest, RecordEdits, SplitSpec, Validation,
};
use hazguard::vlm::{FnBackend, InferenceConfig};
use hazguard::{HazardKind, Parser, PromptTemplate};

fn main() -> anyhow::Result<()> {
    let images = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/site4/images");
    let out = std::env::temp_dir().join("hazguard-annotation-example");
    std::fs::create_dir_all(&out)?;

    // stands in for the annotation model
    let drafter = FnBackend::new("drafter", |req: &hazguard::vlm::CompletionRequest<'_>| {
        Ok(if req.image.len().is_multiple_of(2) {
            "Hazards: fall_hazard\nExplanation:\n-fall_hazard: Worker near an unprotected edge.".to_string()
        } else {
            "Hazards: ppe_non_compliance, unsafe_environment\nExplanation:\n-ppe_non_compliance: No vest.".to_string()
        })
    });
    let cfg = InferenceConfig::annotation("drafter");
    let mut manifest = Manifest::new(Vec::new());
    for entry in std::fs::read_dir(&images)? {
        let path = entry?.path();
        let name = format!("images/{}", path.file_name().unwrap().to_string_lossy());
        let bytes = std::fs::read(&path)?;
        let draft = generate_annotation_draft(
            &name,
            &bytes,
            &drafter,
            &cfg,
            &CategorySet::default(),
            &PromptTemplate::annotation_v1(),
            &Parser::default(),
        )?;
        manifest.upsert(draft);
    }
    manifest.records.sort_by(|a, b| a.image.cmp(&b.image));

    let at = Utc.with_ymd_and_hms(2025, 3, 1, 9, 0, 0).unwrap();
    let refs: Vec<String> = manifest.records.iter().map(|r| r.image.clone()).collect();
    for (i, image) in refs.iter().enumerate() {
        let record = manifest.get(image).unwrap().clone();
        let missing: BTreeMap<HazardKind, String> = record
            .hazards
            .iter()
            .filter(|k| !record.rationales.contains_key(*k))
            .map(|k| (*k, format!("Annotator note on {}.", k.key())))
            .collect();
        let (verdict, edits) = match (i % 3, missing.is_empty()) {
            (2, _) => (Validation::Rejected, None),
            (_, true) => (Validation::Validated, None),
            (_, false) => (
                Validation::Revised,
                Some(RecordEdits {
                    hazards: None,
                    rationales: Some(missing),
                }),
            ),
        };
        let r = manifest.apply_verdict(image, verdict, edits, "annotator-1", at)?;
        println!(
            "{:<22} {:?} -> {:?} ({} history entries)",
            r.image,
            r.history[0].previous_validation,
            r.validation,
            r.history.len()
        );
    }

    let path = out.join("manifest.jsonl");
    manifest.save(&path)?;
    let eval = load_manifest(&path, LoadMode::Evaluation)?;
    println!(
        "\n{} records saved, {} usable for evaluation",
        manifest.records.len(),
        eval.records.len()
    );

    let split = split_dataset(&manifest.records, &SplitSpec::new(0.5, 0.25, 0.25, 7)?)?;
    println!(
        "split train {} val {} test {}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}
