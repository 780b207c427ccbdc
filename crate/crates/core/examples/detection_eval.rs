//! Matching predictions to ground truth and computing per-class AP and mAP
//! over several IoU thresholds.
//!
//! ```text
//! cargo run --example detection_eval
//! ```

use hazguard::detection::GroundTruth;
use hazguard::detection_metrics::{
    evaluate_detections, match_detections, precision_recall, ImageDetections, MAP_THRESHOLDS,
};
use hazguard::{BoundingBox, Detection, ObjectClass};

fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(cx, cy, w, h).expect("valid box")
}

fn main() -> hazguard::Result<()> {
    use ObjectClass::*;
    let images = vec![
        ImageDetections {
            image: "a".into(),
            preds: vec![
                Detection::new(bx(0.30, 0.50, 0.10, 0.20), Worker, 0.92)?,
                Detection::new(bx(0.52, 0.50, 0.10, 0.20), Worker, 0.81)?,
                Detection::new(bx(0.70, 0.60, 0.30, 0.30), Excavator, 0.88)?,
                Detection::new(bx(0.10, 0.10, 0.05, 0.05), Worker, 0.40)?,
            ],
            gts: vec![
                GroundTruth {
                    bbox: bx(0.31, 0.50, 0.10, 0.20),
                    class: Worker,
                },
                GroundTruth {
                    bbox: bx(0.55, 0.52, 0.10, 0.20),
                    class: Worker,
                },
                GroundTruth {
                    bbox: bx(0.72, 0.62, 0.28, 0.30),
                    class: Excavator,
                },
            ],
        },
        ImageDetections {
            image: "b".into(),
            preds: vec![Detection::new(bx(0.40, 0.40, 0.20, 0.20), DumpTruck, 0.77)?],
            gts: vec![
                GroundTruth {
                    bbox: bx(0.42, 0.40, 0.20, 0.22),
                    class: DumpTruck,
                },
                GroundTruth {
                    bbox: bx(0.80, 0.80, 0.06, 0.15),
                    class: Worker,
                },
            ],
        },
    ];

    for alpha in [0.3, 0.5, 0.7] {
        let m = match_detections(&images[0].preds, &images[0].gts, alpha);
        let pr = precision_recall(&m);
        println!(
            "image a @ {alpha}: tp {} fp {} fn {}  P {:.3} R {:.3}",
            m.tp, m.fp, m.fn_, pr.precision, pr.recall
        );
    }

    let report = evaluate_detections(&images, &MAP_THRESHOLDS)?;
    println!("\n{}", report.to_table());
    Ok(())
}
