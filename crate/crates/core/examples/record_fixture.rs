//! Regenerates `fixtures/site4`: four synthetic site images, their detection
//! files, a manifest, and replay transcripts for both prompt modes.
//!
//! The transcripts come from a scripted model wrapped in a recording
//! backend, so the fixture exercises exactly the code path a live run uses.
//!
//! ```text
//! cargo run --example record_fixture -- [out_dir]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use hazguard::dataset::{HazardRecord, Manifest, Source, Validation};
use hazguard::detector::FilesDetector;
use hazguard::pipeline::Pipeline;
use hazguard::vlm::{CompletionRequest, InferenceConfig, RawResponse, RecordingBackend, VlmBackend};
use hazguard::{BoundingBox, Detection, DetectionFile, HazardKind, ObjectClass, PromptMode};
use image::{Rgb, RgbImage};

const MODEL: &str = "fixture-vlm";

struct Scene {
    name: &'static str,
    gt: &'static [(HazardKind, &'static str)],
    objects: &'static [(ObjectClass, f64, f64, f64, f64, f64)],
    baseline: &'static str,
    guided: &'static str,
}

use HazardKind::*;
use ObjectClass::*;

const SCENES: &[Scene] = &[
    Scene {
        name: "site_01.png",
        gt: &[
            (
                PpeNonCompliance,
                "Two workers near the excavator are not wearing high-visibility vests.",
            ),
            (
                CaughtBetweenHazard,
                "A worker stands inside the swing radius of the excavator.",
            ),
        ],
        objects: &[
            (Worker, 0.558, 0.518, 0.06, 0.22, 0.91),
            (Worker, 0.590, 0.514, 0.05, 0.21, 0.88),
            (Excavator, 0.300, 0.550, 0.35, 0.40, 0.95),
        ],
        baseline: "Hazards: ppe_non_compliance, fall_hazard, caught_between_hazard, unsafe_environment\n\
Explanation:\n\
-ppe_non_compliance: Workers do not appear to wear vests.\n\
-fall_hazard: There may be an elevated area nearby.\n\
-caught_between_hazard: Workers are close to heavy machinery.\n\
-unsafe_environment: The site looks disorganized.",
        guided: "<p>Hazards: ppe_non_compliance, caught_between_hazard</p> <p>Explanation:</p> \
<ul style=\"list-style-type: none\"> -ppe_non_compliance: The workers w1 and w2 are not wearing high-visibility vests. \
-caught_between_hazard: The worker w1 is standing within the swing radius of the excavator ex1.</ul>",
    },
    Scene {
        name: "site_02.png",
        gt: &[(FallHazard, "A worker on the roof edge has no guardrail or harness.")],
        objects: &[(Worker, 0.700, 0.200, 0.05, 0.15, 0.87)],
        baseline: "Hazards: fall_hazard, ppe_non_compliance, unsafe_environment\n\
Explanation:\n\
-fall_hazard: A worker is working at height.\n\
-ppe_non_compliance: The worker may lack a harness.\n\
-unsafe_environment: Materials are scattered on the ground.",
        guided: "Hazards: fall_hazard\nExplanation:\n\
-fall_hazard: The worker w1 is at the roof edge without a guardrail or harness.",
    },
    Scene {
        name: "site_03.png",
        gt: &[(UnsafeEnvironment, "Debris and loose rebar cover the walkway.")],
        objects: &[
            (Worker, 0.250, 0.600, 0.05, 0.20, 0.80),
            (DumpTruck, 0.750, 0.500, 0.30, 0.25, 0.93),
        ],
        baseline: "Hazards: unsafe_environment, fall_hazard\n\
Explanation:\n\
-unsafe_environment: Debris covers the walkway.\n\
-fall_hazard: There is an open trench.",
        guided: "Hazards: none",
    },
    Scene {
        name: "site_04.png",
        gt: &[],
        objects: &[(Worker, 0.500, 0.600, 0.06, 0.22, 0.90)],
        baseline: "Hazards: ppe_non_compliance\nExplanation:\n\
-ppe_non_compliance: The worker might not be wearing gloves.",
        guided: "Hazards: none",
    },
];

/// Answers from the scene script, keyed by image bytes and prompt mode,
/// with a fixed latency standing in for a real model.
struct Scripted {
    images: Vec<(Vec<u8>, &'static Scene)>,
}

impl VlmBackend for Scripted {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> hazguard::Result<RawResponse> {
        let scene = self
            .images
            .iter()
            .find(|(b, _)| b == req.image)
            .map(|(_, s)| *s)
            .ok_or_else(|| hazguard::Error::InvalidArgument("unknown image".into()))?;
        let guided = req.prompt.contains("Detected workers and machinery");
        Ok(RawResponse {
            text: if guided { scene.guided } else { scene.baseline }.to_string(),
            latency: Duration::from_millis(if guided { 2110 } else { 2085 }),
            token_usage: None,
            backend_id: "scripted".into(),
        })
    }
}

fn draw(scene: &Scene, seed: u8) -> RgbImage {
    let (w, h) = (320u32, 240u32);
    let mut img = RgbImage::from_fn(w, h, |_, y| {
        if y < h / 2 {
            Rgb([150, 190, 230])
        } else {
            Rgb([120 + seed * 10, 100, 70])
        }
    });
    for (class, cx, cy, bw, bh, _) in scene.objects {
        let color = if *class == Worker {
            Rgb([240, 120, 20])
        } else {
            Rgb([230, 200, 30])
        };
        let x0 = ((cx - bw / 2.0) * f64::from(w)) as u32;
        let y0 = ((cy - bh / 2.0) * f64::from(h)) as u32;
        let x1 = ((cx + bw / 2.0) * f64::from(w)) as u32;
        let y1 = ((cy + bh / 2.0) * f64::from(h)) as u32;
        for y in y0..y1.min(h) {
            for x in x0..x1.min(w) {
                img.put_pixel(x, y, color);
            }
        }
    }
    img
}

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/site4"));
    let (images_dir, det_dir, tr_dir) = (out.join("images"), out.join("detections"), out.join("transcripts"));
    for d in [&images_dir, &det_dir, &tr_dir] {
        std::fs::create_dir_all(d)?;
    }

    let mut records = Vec::new();
    let mut scripted = Vec::new();
    for (i, scene) in SCENES.iter().enumerate() {
        let path = images_dir.join(scene.name);
        draw(scene, i as u8).save(&path)?;
        scripted.push((std::fs::read(&path)?, scene));

        let detections = scene
            .objects
            .iter()
            .map(|(c, cx, cy, w, h, s)| Detection::new(BoundingBox::new(*cx, *cy, *w, *h)?, *c, *s))
            .collect::<hazguard::Result<Vec<_>>>()?;
        let file = DetectionFile {
            image: format!("images/{}", scene.name),
            detections,
        };
        let det_path = det_dir.join("images").join(scene.name).with_extension("json");
        std::fs::create_dir_all(det_path.parent().unwrap())?;
        std::fs::write(&det_path, serde_json::to_string_pretty(&file)? + "\n")?;

        let mut r = HazardRecord::new(format!("images/{}", scene.name));
        r.hazards = scene.gt.iter().map(|(k, _)| *k).collect::<BTreeSet<_>>();
        r.rationales = scene
            .gt
            .iter()
            .map(|(k, t)| (*k, t.to_string()))
            .collect::<BTreeMap<_, _>>();
        r.validation = Validation::Validated;
        r.source = if i % 2 == 0 {
            Source::PublicDataset
        } else {
            Source::HistoricalInspection
        };
        records.push(r);
    }
    // a draft that evaluation loads must skip
    let mut draft = HazardRecord::new("images/site_05.png");
    draft.hazards.insert(FallHazard);
    records.push(draft);
    let manifest = Manifest::new(records);
    manifest.save(&out.join("manifest.jsonl"))?;

    let backend = Arc::new(RecordingBackend::new(Scripted { images: scripted }, &tr_dir));
    let files = Arc::new(FilesDetector::new(
        &det_dir,
        hazguard::detection::DEFAULT_SCORE_THRESHOLD,
    ));
    let eval: Vec<HazardRecord> = manifest.records.iter().filter(|r| r.in_evaluation()).cloned().collect();
    for mode in [PromptMode::Baseline, PromptMode::DetectionGuided] {
        let p = Pipeline::new(mode, backend.clone(), InferenceConfig::evaluation(MODEL)).with_detector(files.clone());
        let report = p.run(&eval, &out)?;
        println!(
            "{mode}: P {:.3} R {:.3} F1 {:.3} ({} errors)",
            report.corpus.hazards.micro.precision,
            report.corpus.hazards.micro.recall,
            report.corpus.hazards.micro.f1,
            report.error_count()
        );
    }
    println!("fixture written to {}", out.display());
    Ok(())
}
