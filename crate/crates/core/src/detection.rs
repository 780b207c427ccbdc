//! Detected entities: normalized boxes, the object-class taxonomy, score
//! filtering and left-to-right identifier assignment.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default confidence cut applied before identifiers are assigned.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.25;

/// Axis-aligned box in normalized center format.
///
/// Invariants: `0 <= cx, cy <= 1` and `0 < w, h <= 1`. Corners derived from a
/// box are clamped to the unit square, so a box hanging over the image edge
/// is measured only by its visible part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let extent = |v: f64| v > 0.0 && v <= 1.0;
        if !(unit(cx) && unit(cy)) {
            return Err(Error::InvalidBox(format!(
                "center ({cx}, {cy}) outside the unit square"
            )));
        }
        if !(extent(w) && extent(h)) {
            return Err(Error::InvalidBox(format!("extent ({w}, {h}) must lie in (0, 1]")));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Builds a box from corner coordinates, clamping them to the unit square
    /// first. Returns `None` when nothing of the box remains visible.
    pub fn from_corners_clamped(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        let (x1, x2) = (x1.min(x2).clamp(0.0, 1.0), x1.max(x2).clamp(0.0, 1.0));
        let (y1, y2) = (y1.min(y2).clamp(0.0, 1.0), y1.max(y2).clamp(0.0, 1.0));
        let (w, h) = (x2 - x1, y2 - y1);
        if !(w > 0.0 && h > 0.0) {
            return None;
        }
        Self::new((x1 + x2) / 2.0, (y1 + y2) / 2.0, w, h).ok()
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }

    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `(x1, y1, x2, y2)` clamped to `[0, 1]`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            (self.cx - self.w / 2.0).max(0.0),
            (self.cy - self.h / 2.0).max(0.0),
            (self.cx + self.w / 2.0).min(1.0),
            (self.cy + self.h / 2.0).min(1.0),
        )
    }

    pub fn area(&self) -> f64 {
        let (x1, y1, x2, y2) = self.corners();
        (x2 - x1) * (y2 - y1)
    }

    /// Pixel-space `(left, top, width, height)` for an image of the given size.
    pub fn to_pixels(&self, img_w: f64, img_h: f64) -> (f64, f64, f64, f64) {
        (
            (self.cx - self.w / 2.0) * img_w,
            (self.cy - self.h / 2.0) * img_h,
            self.w * img_w,
            self.h * img_h,
        )
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            cx: f64,
            cy: f64,
            w: f64,
            h: f64,
        }
        let raw = Raw::deserialize(d)?;
        BoundingBox::new(raw.cx, raw.cy, raw.w, raw.h).map_err(serde::de::Error::custom)
    }
}

/// Converts a pixel-space `(left, top, width, height)` box into normalized
/// center format.
pub fn normalize_box(
    px_left: f64,
    px_top: f64,
    px_width: f64,
    px_height: f64,
    img_w: f64,
    img_h: f64,
) -> Result<BoundingBox> {
    if !(img_w > 0.0 && img_h > 0.0) {
        return Err(Error::InvalidBox(format!(
            "image dimensions must be positive, got {img_w}x{img_h}"
        )));
    }
    if !(px_width > 0.0 && px_height > 0.0) {
        return Err(Error::InvalidBox(format!(
            "box size must be positive, got {px_width}x{px_height}"
        )));
    }
    let right = px_left + px_width;
    let bottom = px_top + px_height;
    if px_left < 0.0 || px_top < 0.0 || right > img_w || bottom > img_h {
        return Err(Error::InvalidBox(format!(
            "box [{px_left}, {px_top}, {right}, {bottom}] exceeds image bounds {img_w}x{img_h}"
        )));
    }
    BoundingBox::new(
        (px_left + px_width / 2.0) / img_w,
        (px_top + px_height / 2.0) / img_h,
        px_width / img_w,
        px_height / img_h,
    )
}

/// Intersection over union of two boxes, measured on their clamped corners.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// The worker and heavy-machinery taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObjectClass {
    Worker,
    CementTruck,
    Compactor,
    Dozer,
    DumpTruck,
    Excavator,
    Grader,
    MobileCrane,
    TowerCrane,
    WheelLoader,
    BackhoeLoader,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 11] = [
        ObjectClass::Worker,
        ObjectClass::CementTruck,
        ObjectClass::Compactor,
        ObjectClass::Dozer,
        ObjectClass::DumpTruck,
        ObjectClass::Excavator,
        ObjectClass::Grader,
        ObjectClass::MobileCrane,
        ObjectClass::TowerCrane,
        ObjectClass::WheelLoader,
        ObjectClass::BackhoeLoader,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Worker => "Worker",
            ObjectClass::CementTruck => "Cement Truck",
            ObjectClass::Compactor => "Compactor",
            ObjectClass::Dozer => "Dozer",
            ObjectClass::DumpTruck => "Dump Truck",
            ObjectClass::Excavator => "Excavator",
            ObjectClass::Grader => "Grader",
            ObjectClass::MobileCrane => "Mobile Crane",
            ObjectClass::TowerCrane => "Tower Crane",
            ObjectClass::WheelLoader => "Wheel Loader",
            ObjectClass::BackhoeLoader => "Backhoe Loader",
        }
    }

    /// Identifier prefix, e.g. `w` for workers and `ex` for excavators.
    pub fn prefix(self) -> &'static str {
        match self {
            ObjectClass::Worker => "w",
            ObjectClass::CementTruck => "ct",
            ObjectClass::Compactor => "cp",
            ObjectClass::Dozer => "dz",
            ObjectClass::DumpTruck => "dt",
            ObjectClass::Excavator => "ex",
            ObjectClass::Grader => "gr",
            ObjectClass::MobileCrane => "mc",
            ObjectClass::TowerCrane => "tc",
            ObjectClass::WheelLoader => "wl",
            ObjectClass::BackhoeLoader => "bl",
        }
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    /// Accepts display names in any case, with spaces, underscores or hyphens.
    fn from_str(s: &str) -> Result<Self> {
        let folded: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        ObjectClass::ALL
            .into_iter()
            .find(|c| c.name().replace(' ', "").to_lowercase() == folded)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

impl Serialize for ObjectClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ObjectClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: ObjectClass,
    #[serde(flatten)]
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, class: ObjectClass, score: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidArgument(format!(
                "detection score {score} outside [0, 1]"
            )));
        }
        Ok(Self { bbox, class, score })
    }
}

/// Keeps detections scoring at or above `threshold`, preserving order.
pub fn filter_detections(detections: &[Detection], threshold: f64) -> Vec<Detection> {
    detections.iter().filter(|d| d.score >= threshold).copied().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentifiedDetection {
    pub id: String,
    #[serde(flatten)]
    pub detection: Detection,
}

// Left to right, then top to bottom, then most confident first. Width and
// height only matter for otherwise identical detections.
fn spatial_order(a: &Detection, b: &Detection) -> Ordering {
    a.bbox
        .cx
        .total_cmp(&b.bbox.cx)
        .then(a.bbox.cy.total_cmp(&b.bbox.cy))
        .then(b.score.total_cmp(&a.score))
        .then(a.bbox.w.total_cmp(&b.bbox.w))
        .then(a.bbox.h.total_cmp(&b.bbox.h))
}

/// Assigns per-class identifiers (`w1`, `w2`, `ex1`, ...) in ascending
/// horizontal order.
///
/// Output is grouped by class in taxonomy order and is a function of the
/// detection multiset alone.
pub fn assign_identifiers(detections: &[Detection]) -> Vec<IdentifiedDetection> {
    let mut sorted: Vec<Detection> = detections.to_vec();
    sorted.sort_by(|a, b| a.class.cmp(&b.class).then_with(|| spatial_order(a, b)));

    let mut out = Vec::with_capacity(sorted.len());
    let mut current: Option<ObjectClass> = None;
    let mut index = 0usize;
    for detection in sorted {
        if current != Some(detection.class) {
            current = Some(detection.class);
            index = 0;
        }
        index += 1;
        out.push(IdentifiedDetection {
            id: format!("{}{}", detection.class.prefix(), index),
            detection,
        });
    }
    out
}

/// Per-image detection document consumed by the files detector backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub image: String,
    pub detections: Vec<Detection>,
}

impl DetectionFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("detection file", e))
    }
}

/// Ordered class names; position is the model or label class index.
///
/// Names outside the taxonomy are kept as `None` so indices stay aligned;
/// anything labelled with them is ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassList(Vec<Option<ObjectClass>>);

impl ClassList {
    pub fn new(classes: Vec<Option<ObjectClass>>) -> Self {
        Self(classes)
    }

    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse().ok())
                .collect(),
        )
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading class list {}", path.display()), e))?;
        Ok(Self::parse(&text))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<ObjectClass> {
        self.0.get(index).copied().flatten()
    }
}

impl Default for ClassList {
    fn default() -> Self {
        Self(ObjectClass::ALL.iter().copied().map(Some).collect())
    }
}

/// A ground-truth object: box plus class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BoundingBox,
    pub class: ObjectClass,
}

/// Parses a `<class_index> <cx> <cy> <w> <h>` label file.
pub fn parse_label_file(text: &str, classes: &ClassList) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::InvalidArgument(format!("label line {}: {msg}", n + 1));
        if fields.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad class index"))?;
        let nums: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad coordinate"))?;
        if index >= classes.len() {
            return Err(bad("class index beyond class list"));
        }
        let Some(class) = classes.get(index) else {
            continue;
        };
        let bbox = BoundingBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(|e| bad(&e.to_string()))?;
        out.push(GroundTruth { bbox, class });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    fn det(class: ObjectClass, cx: f64, cy: f64, score: f64) -> Detection {
        Detection::new(bx(cx, cy, 0.1, 0.1), class, score).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let full = normalize_box(0.0, 0.0, 640.0, 640.0, 640.0, 640.0).unwrap();
        assert_eq!(full, bx(0.5, 0.5, 1.0, 1.0));
        let half = normalize_box(160.0, 160.0, 320.0, 320.0, 640.0, 640.0).unwrap();
        assert_eq!(half, bx(0.5, 0.5, 0.5, 0.5));
        let b = normalize_box(100.0, 50.0, 200.0, 100.0, 1000.0, 500.0).unwrap();
        for v in [b.cx(), b.cy(), b.w(), b.h()] {
            assert!((v - 0.2).abs() < 1e-12);
        }
        let (l, t, w, h) = b.to_pixels(1000.0, 500.0);
        assert!((l - 100.0).abs() < 0.5 && (t - 50.0).abs() < 0.5);
        assert!((w - 200.0).abs() < 0.5 && (h - 100.0).abs() < 0.5);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert!(normalize_box(0.0, 0.0, 10.0, 10.0, 0.0, 100.0).is_err());
        assert!(normalize_box(95.0, 0.0, 10.0, 10.0, 100.0, 100.0).is_err());
        assert!(normalize_box(-1.0, 0.0, 10.0, 10.0, 100.0, 100.0).is_err());
    }

    #[test]
    fn box_invariants() {
        assert!(BoundingBox::new(0.5, 0.5, 0.0, 0.1).is_err());
        assert!(BoundingBox::new(1.2, 0.5, 0.1, 0.1).is_err());
        assert!(BoundingBox::new(0.5, 0.5, 1.5, 0.1).is_err());
        let edge = bx(0.95, 0.05, 0.2, 0.2);
        let (x1, y1, x2, y2) = edge.corners();
        assert!((x1 - 0.85).abs() < 1e-12 && y1 == 0.0 && x2 == 1.0 && (y2 - 0.15).abs() < 1e-12);
        assert!(BoundingBox::from_corners_clamped(1.1, 0.2, 1.3, 0.4).is_none());
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.5, 0.5, 0.4, 0.4);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bx(0.2, 0.2, 0.2, 0.2), &bx(0.8, 0.8, 0.2, 0.2)), 0.0);
        let v = iou(&bx(0.25, 0.25, 0.5, 0.5), &bx(0.5, 0.5, 0.5, 0.5));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn filter_examples() {
        let ds = [
            det(ObjectClass::Worker, 0.1, 0.1, 0.9),
            det(ObjectClass::Worker, 0.2, 0.1, 0.1),
            det(ObjectClass::Worker, 0.3, 0.1, 0.3),
        ];
        let kept = filter_detections(&ds, 0.25);
        assert_eq!(kept, vec![ds[0], ds[2]]);
        assert_eq!(filter_detections(&ds, 0.0), ds.to_vec());
        assert!(filter_detections(&ds, 1.0).is_empty());
    }

    #[test]
    fn identifiers_follow_horizontal_order() {
        let ids = assign_identifiers(&[
            det(ObjectClass::Worker, 0.590, 0.514, 0.8),
            det(ObjectClass::Worker, 0.558, 0.518, 0.7),
        ]);
        assert_eq!(ids[0].id, "w1");
        assert_eq!(ids[0].detection.bbox.cx(), 0.558);
        assert_eq!(ids[1].id, "w2");
        assert_eq!(ids[1].detection.bbox.cx(), 0.590);

        let ids = assign_identifiers(&[det(ObjectClass::Excavator, 0.9, 0.9, 0.5)]);
        assert_eq!(ids[0].id, "ex1");

        let ids = assign_identifiers(&[
            det(ObjectClass::Worker, 0.7, 0.5, 0.9),
            det(ObjectClass::Excavator, 0.2, 0.5, 0.9),
            det(ObjectClass::Worker, 0.3, 0.5, 0.9),
        ]);
        let got: Vec<(&str, f64)> = ids.iter().map(|i| (i.id.as_str(), i.detection.bbox.cx())).collect();
        assert_eq!(got, vec![("w1", 0.3), ("w2", 0.7), ("ex1", 0.2)]);
    }

    #[test]
    fn identifier_ties_break_on_vertical_then_score() {
        let ids = assign_identifiers(&[
            det(ObjectClass::Worker, 0.5, 0.8, 0.9),
            det(ObjectClass::Worker, 0.5, 0.2, 0.4),
            det(ObjectClass::Worker, 0.5, 0.2, 0.6),
        ]);
        let got: Vec<(f64, f64)> = ids.iter().map(|i| (i.detection.bbox.cy(), i.detection.score)).collect();
        assert_eq!(got, vec![(0.2, 0.6), (0.2, 0.4), (0.8, 0.9)]);
    }

    #[test]
    fn prefixes_are_unique() {
        let mut seen: Vec<&str> = ObjectClass::ALL.iter().map(|c| c.prefix()).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), ObjectClass::ALL.len());
    }

    #[test]
    fn class_names_parse_loosely() {
        assert_eq!("dump truck".parse::<ObjectClass>().unwrap(), ObjectClass::DumpTruck);
        assert_eq!(
            "Backhoe_Loader".parse::<ObjectClass>().unwrap(),
            ObjectClass::BackhoeLoader
        );
        assert!("forklift".parse::<ObjectClass>().is_err());
    }

    #[test]
    fn detection_file_format() {
        let text = r#"{"image": "a.jpg", "detections": [
            {"class": "Worker", "cx": 0.5, "cy": 0.4, "w": 0.1, "h": 0.3, "score": 0.9}]}"#;
        let file = DetectionFile::from_json(text).unwrap();
        assert_eq!(file.detections[0].class, ObjectClass::Worker);
        assert_eq!(file.detections[0].bbox.cy(), 0.4);
        let bad = r#"{"image": "a.jpg", "detections": [
            {"class": "Worker", "cx": 1.5, "cy": 0.4, "w": 0.1, "h": 0.3, "score": 0.9}]}"#;
        assert!(DetectionFile::from_json(bad).is_err());
    }

    #[test]
    fn label_file_skips_unmapped_classes() {
        let classes = ClassList::parse("Worker\nhelmet\nExcavator\n");
        assert_eq!(classes.len(), 3);
        let gts = parse_label_file("0 0.5 0.5 0.2 0.2\n1 0.1 0.1 0.1 0.1\n2 0.3 0.3 0.2 0.2\n", &classes).unwrap();
        assert_eq!(gts.len(), 2);
        assert_eq!(gts[1].class, ObjectClass::Excavator);
        assert!(parse_label_file("7 0.5 0.5 0.2 0.2", &classes).is_err());
        assert!(parse_label_file("0 0.5 0.5", &classes).is_err());
    }
}
