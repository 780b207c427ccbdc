//! Letterboxing and in-process ONNX inference. Uses the tiny stand-in model
//! under `fixtures/models` unless a model path is given.
//!
//! ```text
//! cargo run --example embedded_detector -- [model.onnx] [classes.txt]
//! ```

use std::path::PathBuf;

use hazguard::detection::{ClassList, DEFAULT_SCORE_THRESHOLD};
use hazguard::detector::{letterbox_transform, Detector, EmbeddedDetector, DEFAULT_INPUT_SIZE};
use image::{Rgb, RgbImage};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let model = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/models/tiny_detector.onnx"));
    let classes = match args.next() {
        Some(p) => ClassList::load(p.as_ref())?,
        None => ClassList::default(),
    };

    let lb = letterbox_transform(1280, 640, DEFAULT_INPUT_SIZE)?;
    println!("1280x640 -> scale {} pad ({}, {})", lb.scale, lb.pad_x, lb.pad_y);

    let detector = EmbeddedDetector::load(&model, DEFAULT_INPUT_SIZE, classes, DEFAULT_SCORE_THRESHOLD)?;
    for (name, shade) in [("black", 0u8), ("white", 255u8)] {
        let img = RgbImage::from_pixel(1280, 640, Rgb([shade; 3]));
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)?;
        let dets = detector.detect(name, &png)?;
        println!("{name}: {} detections", dets.len());
        for d in dets {
            let b = d.bbox;
            println!(
                "  {:<10} {:.2}  cx {:.3} cy {:.3} w {:.3} h {:.3}",
                d.class.name(),
                d.score,
                b.cx(),
                b.cy(),
                b.w(),
                b.h()
            );
        }
    }
    Ok(())
}
