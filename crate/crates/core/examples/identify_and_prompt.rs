//! Pixel boxes from a detector become normalized detections, get per-class
//! identifiers, and are written into a detection-guided prompt.
//!
//! ```text
//! cargo run --example identify_and_prompt
//! ```

use hazguard::category::CategorySet;
use hazguard::{
    assign_identifiers, build_prompt, filter_detections, normalize_box, Detection, ObjectClass, PromptMode,
    PromptTemplate,
};

fn main() -> hazguard::Result<()> {
    let (w, h) = (1920.0, 1080.0);
    // (left, top, width, height) in pixels, class, score
    let raw = [
        (1010.0, 440.0, 110.0, 240.0, ObjectClass::Worker, 0.91),
        (1080.0, 450.0, 100.0, 230.0, ObjectClass::Worker, 0.88),
        (240.0, 380.0, 670.0, 430.0, ObjectClass::Excavator, 0.95),
        (1500.0, 700.0, 60.0, 50.0, ObjectClass::Worker, 0.12), // below threshold
    ];
    let detections = raw
        .iter()
        .map(|&(l, t, bw, bh, c, s)| Detection::new(normalize_box(l, t, bw, bh, w, h)?, c, s))
        .collect::<hazguard::Result<Vec<_>>>()?;
    let kept = filter_detections(&detections, hazguard::detection::DEFAULT_SCORE_THRESHOLD);
    println!("{} of {} detections kept", kept.len(), detections.len());

    let ids = assign_identifiers(&kept);
    for d in &ids {
        let b = d.detection.bbox;
        println!(
            "{:<4} {:<10} cx={:.3} cy={:.3} score={:.2}",
            d.id,
            d.detection.class.name(),
            b.cx(),
            b.cy(),
            d.detection.score
        );
    }

    let categories = CategorySet::default();
    let guided = build_prompt(
        PromptMode::DetectionGuided,
        &ids,
        &categories,
        &PromptTemplate::guided_v1(),
    )?;
    let baseline = build_prompt(PromptMode::Baseline, &ids, &categories, &PromptTemplate::baseline_v1())?;
    println!(
        "\n--- guided ({}, {} entities) ---\n{}",
        guided.template_version, guided.entity_count, guided.text
    );
    println!(
        "\n--- baseline differs only in the scene context: {} vs {} chars",
        baseline.text.len(),
        guided.text.len()
    );
    Ok(())
}
