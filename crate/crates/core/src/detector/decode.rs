use crate::detection::{BoundingBox, ClassList, Detection};
use crate::error::{Error, Result};

use super::Letterbox;

/// Layout of a detector's output tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputHead {
    /// `[1, 4 + nc, N]`: center box in input pixels then per-class scores.
    /// Candidates are thresholded but not suppressed.
    Raw { anchors: usize },
    /// `[1, N, 4 + nc]`, the transposed raw layout. With two classes this
    /// is indistinguishable from `EndToEnd`, which wins.
    RawTransposed { anchors: usize },
    /// `[1, K, 6]`: `x1, y1, x2, y2, score, class_id` after NMS.
    EndToEnd { rows: usize },
}

impl OutputHead {
    pub fn infer(shape: &[usize], num_classes: usize) -> Result<Self> {
        let channels = 4 + num_classes;
        match shape {
            [1, c, n] if *c == channels => Ok(OutputHead::Raw { anchors: *n }),
            [1, k, 6] => Ok(OutputHead::EndToEnd { rows: *k }),
            [1, n, c] if *c == channels => Ok(OutputHead::RawTransposed { anchors: *n }),
            _ => Err(Error::Inference(format!(
                "unsupported output shape {shape:?} for {num_classes} classes"
            ))),
        }
    }
}

fn emit(
    out: &mut Vec<Detection>,
    lb: &Letterbox,
    classes: &ClassList,
    threshold: f64,
    corners: (f64, f64, f64, f64),
    class_id: usize,
    score: f64,
) {
    if !score.is_finite() || score < threshold {
        return;
    }
    let Some(class) = classes.get(class_id) else {
        return;
    };
    let (x1, y1, x2, y2) = lb.inverse_normalized(corners.0, corners.1, corners.2, corners.3);
    if let Some(bbox) = BoundingBox::from_corners_clamped(x1, y1, x2, y2) {
        if let Ok(d) = Detection::new(bbox, class, score.min(1.0)) {
            out.push(d);
        }
    }
}

/// Turns a raw output tensor into normalized detections in original-image
/// coordinates.
pub fn decode_output(
    shape: &[usize],
    data: &[f32],
    lb: &Letterbox,
    classes: &ClassList,
    threshold: f64,
) -> Result<Vec<Detection>> {
    let expected: usize = shape.iter().product();
    if data.len() != expected {
        return Err(Error::Inference(format!(
            "output has {} values, shape {shape:?} needs {expected}",
            data.len()
        )));
    }
    // some exports carry extra leading unit axes
    let mut shape = shape;
    while shape.len() > 3 && shape[0] == 1 {
        shape = &shape[1..];
    }
    let nc = classes.len();
    let head = OutputHead::infer(shape, nc)?;
    let mut out = Vec::new();
    match head {
        OutputHead::Raw { .. } | OutputHead::RawTransposed { .. } => {
            let (n, at): (usize, Box<dyn Fn(usize, usize) -> f64>) = match head {
                OutputHead::Raw { anchors } => (anchors, Box::new(move |c, i| f64::from(data[c * anchors + i]))),
                OutputHead::RawTransposed { anchors } => {
                    (anchors, Box::new(move |c, i| f64::from(data[i * (4 + nc) + c])))
                }
                OutputHead::EndToEnd { .. } => unreachable!(),
            };
            for i in 0..n {
                let (best, score) = (0..nc)
                    .map(|k| (k, at(4 + k, i)))
                    .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                let (cx, cy, w, h) = (at(0, i), at(1, i), at(2, i), at(3, i));
                emit(
                    &mut out,
                    lb,
                    classes,
                    threshold,
                    (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
                    best,
                    score,
                );
            }
        }
        OutputHead::EndToEnd { rows } => {
            for r in 0..rows {
                let row = &data[r * 6..r * 6 + 6];
                let v = |j: usize| f64::from(row[j]);
                let class_id = v(5);
                if class_id < 0.0 || !class_id.is_finite() {
                    continue;
                }
                emit(
                    &mut out,
                    lb,
                    classes,
                    threshold,
                    (v(0), v(1), v(2), v(3)),
                    class_id.round() as usize,
                    v(4),
                );
            }
        }
    }
    Ok(out)
}
