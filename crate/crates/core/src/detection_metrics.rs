//! Detector scoring: greedy matching, precision/recall, 11-point AP and mAP.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::detection::{iou, Detection, GroundTruth, ObjectClass};
use crate::error::{Error, Result};

/// IoU thresholds averaged by the headline mAP.
pub const MAP_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Match {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<Match>,
    /// Per prediction, in input order: whether it was matched.
    pub pred_is_tp: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
}

/// `num / den`, with `0 / 0` taken as 0.
pub fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy one-to-one matching.
///
/// Predictions are visited by descending score (ties by input order); each
/// takes the unmatched same-class ground truth with the highest IoU (ties by
/// lowest index) if that IoU is at least `alpha`.
pub fn match_detections(preds: &[Detection], gts: &[GroundTruth], alpha: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));

    let mut taken = vec![false; gts.len()];
    let mut pred_is_tp = vec![false; preds.len()];
    let mut matches = Vec::new();
    for p in order {
        let pred = &preds[p];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] || gt.class != pred.class {
                continue;
            }
            let v = iou(&pred.bbox, &gt.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            if v >= alpha {
                taken[g] = true;
                pred_is_tp[p] = true;
                matches.push(Match { pred: p, gt: g, iou: v });
            }
        }
    }
    let tp = matches.len();
    MatchResult {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        matches,
        pred_is_tp,
    }
}

pub fn precision_recall(m: &MatchResult) -> PrPoint {
    counts_to_pr(m.tp, m.fp, m.fn_)
}

pub fn counts_to_pr(tp: usize, fp: usize, fn_: usize) -> PrPoint {
    PrPoint {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    }
}

/// A scored prediction flagged as matched or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedPrediction {
    pub score: f64,
    pub is_tp: bool,
}

/// 11-point interpolated average precision.
///
/// The ranking is sorted by descending score (stable). At each recall level
/// `r in {0, 0.1, ..., 1}` the interpolated precision is the best precision
/// reached at any recall `>= r`, or 0 if recall `r` is never reached.
/// Returns `None` when there is neither ground truth nor any prediction.
pub fn average_precision(ranked: &[RankedPrediction], total_gt: usize) -> Result<Option<f64>> {
    let tps = ranked.iter().filter(|p| p.is_tp).count();
    if tps > total_gt {
        return Err(Error::InvalidArgument(format!(
            "{tps} true positives but only {total_gt} ground-truth boxes"
        )));
    }
    if total_gt == 0 && ranked.is_empty() {
        return Ok(None);
    }
    if total_gt == 0 {
        return Ok(Some(0.0));
    }

    let mut sorted = ranked.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    // (tp count, precision) after each prefix of the ranking
    let mut curve = Vec::with_capacity(sorted.len());
    let mut tp = 0usize;
    for (k, p) in sorted.iter().enumerate() {
        if p.is_tp {
            tp += 1;
        }
        curve.push((tp, tp as f64 / (k + 1) as f64));
    }
    // right-to-left running max gives the interpolated envelope
    let mut envelope = vec![0.0f64; curve.len()];
    let mut best = 0.0f64;
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].1);
        envelope[i] = best;
    }

    let mut sum = 0.0;
    let mut i = 0usize;
    for level in 0..=10usize {
        // first point whose recall tp/total_gt reaches level/10
        while i < curve.len() && curve[i].0 * 10 < level * total_gt {
            i += 1;
        }
        if i < curve.len() {
            sum += envelope[i];
        }
    }
    Ok(Some(sum / 11.0))
}

/// AP per class and IoU threshold; `None` marks a class with neither ground
/// truth nor predictions.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ApTable {
    pub thresholds: Vec<f64>,
    pub classes: Vec<ObjectClass>,
    /// `values[class_index][threshold_index]`
    pub values: Vec<Vec<Option<f64>>>,
}

impl ApTable {
    pub fn get(&self, class: ObjectClass, threshold_index: usize) -> Option<f64> {
        let c = self.classes.iter().position(|c| *c == class)?;
        self.values[c][threshold_index]
    }

    /// Mean over present classes of AP at one threshold.
    pub fn class_mean(&self, threshold_index: usize) -> Option<f64> {
        let present: Vec<f64> = self.values.iter().filter_map(|row| row[threshold_index]).collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Mean over thresholds of the class-mean AP. Thresholds at which no class
/// has an AP are skipped; a table without any value is an error.
pub fn mean_average_precision(table: &ApTable) -> Result<f64> {
    let means: Vec<f64> = (0..table.thresholds.len())
        .filter_map(|t| table.class_mean(t))
        .collect();
    if means.is_empty() {
        return Err(Error::InvalidArgument("AP table is empty".into()));
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, Default)]
pub struct ImageDetections {
    pub image: String,
    pub preds: Vec<Detection>,
    pub gts: Vec<GroundTruth>,
}

/// Builds the AP table for a corpus at the given thresholds.
pub fn ap_table(images: &[ImageDetections], thresholds: &[f64]) -> Result<ApTable> {
    let mut classes: Vec<ObjectClass> = images
        .iter()
        .flat_map(|im| im.preds.iter().map(|p| p.class).chain(im.gts.iter().map(|g| g.class)))
        .collect();
    classes.sort();
    classes.dedup();

    let mut values = vec![Vec::with_capacity(thresholds.len()); classes.len()];
    for &alpha in thresholds {
        let mut ranked: BTreeMap<ObjectClass, Vec<RankedPrediction>> = BTreeMap::new();
        let mut gt_count: BTreeMap<ObjectClass, usize> = BTreeMap::new();
        for im in images {
            let m = match_detections(&im.preds, &im.gts, alpha);
            for (p, is_tp) in im.preds.iter().zip(&m.pred_is_tp) {
                ranked.entry(p.class).or_default().push(RankedPrediction {
                    score: p.score,
                    is_tp: *is_tp,
                });
            }
            for g in &im.gts {
                *gt_count.entry(g.class).or_default() += 1;
            }
        }
        for (ci, class) in classes.iter().enumerate() {
            let r = ranked.get(class).map(Vec::as_slice).unwrap_or(&[]);
            values[ci].push(average_precision(r, gt_count.get(class).copied().unwrap_or(0))?);
        }
    }
    Ok(ApTable {
        thresholds: thresholds.to_vec(),
        classes,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDetectionRow {
    pub class: ObjectClass,
    pub ground_truth: usize,
    pub predictions: usize,
    /// Precision and recall at IoU 0.5.
    pub precision: f64,
    pub recall: f64,
    pub ap_50: Option<f64>,
    pub ap_50_95: Option<f64>,
    /// AP at each requested threshold, in request order.
    pub ap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub report_version: u32,
    pub interpolation: &'static str,
    pub thresholds: Vec<f64>,
    pub per_class: Vec<ClassDetectionRow>,
    /// Mean over `thresholds` of the class-mean AP.
    pub map: Option<f64>,
    pub map_50: Option<f64>,
    pub map_50_95: Option<f64>,
    pub precision: f64,
    pub recall: f64,
}

/// Full detector evaluation: per-class P/R at 0.5, AP at every requested
/// threshold, and the three mAP summaries.
pub fn evaluate_detections(images: &[ImageDetections], thresholds: &[f64]) -> Result<DetectionReport> {
    if thresholds.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidArgument("IoU thresholds must lie in (0, 1]".into()));
    }
    let table = ap_table(images, thresholds)?;
    let coco = ap_table(images, &coco_thresholds())?;

    let mut per_class = Vec::new();
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for (ci, &class) in table.classes.iter().enumerate() {
        let (mut tp, mut fp, mut fn_, mut gtn, mut pn) = (0, 0, 0, 0, 0);
        for im in images {
            let preds: Vec<Detection> = im.preds.iter().filter(|p| p.class == class).copied().collect();
            let gts: Vec<GroundTruth> = im.gts.iter().filter(|g| g.class == class).copied().collect();
            let m = match_detections(&preds, &gts, 0.5);
            tp += m.tp;
            fp += m.fp;
            fn_ += m.fn_;
            gtn += gts.len();
            pn += preds.len();
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let pr = counts_to_pr(tp, fp, fn_);
        let coco_row = &coco.values[coco.classes.iter().position(|c| *c == class).unwrap()];
        let present: Vec<f64> = coco_row.iter().flatten().copied().collect();
        per_class.push(ClassDetectionRow {
            class,
            ground_truth: gtn,
            predictions: pn,
            precision: pr.precision,
            recall: pr.recall,
            ap_50: coco_row[0],
            ap_50_95: (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64),
            ap: table.values[ci].clone(),
        });
    }
    let overall = counts_to_pr(tp_all, fp_all, fn_all);
    Ok(DetectionReport {
        report_version: 1,
        interpolation: "11-point",
        thresholds: thresholds.to_vec(),
        per_class,
        map: mean_average_precision(&table).ok(),
        map_50: coco.class_mean(0),
        map_50_95: mean_average_precision(&coco).ok(),
        precision: overall.precision,
        recall: overall.recall,
    })
}

impl DetectionReport {
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}", x * 100.0));
        let mut out = format!(
            "{:<16} {:>6} {:>6} {:>7} {:>7} {:>9} {:>12}\n",
            "class", "gt", "pred", "P", "R", "AP@0.5", "AP@0.5:0.95"
        );
        for r in &self.per_class {
            out.push_str(&format!(
                "{:<16} {:>6} {:>6} {:>7.1} {:>7.1} {:>9} {:>12}\n",
                r.class.name(),
                r.ground_truth,
                r.predictions,
                r.precision * 100.0,
                r.recall * 100.0,
                fmt(r.ap_50),
                fmt(r.ap_50_95)
            ));
        }
        let alphas: Vec<String> = self.thresholds.iter().map(|a| format!("{a}")).collect();
        out.push_str(&format!(
            "{:<16} {:>6} {:>6} {:>7.1} {:>7.1} {:>9} {:>12}\n",
            "overall",
            "",
            "",
            self.precision * 100.0,
            self.recall * 100.0,
            fmt(self.map_50),
            fmt(self.map_50_95)
        ));
        out.push_str(&format!(
            "mAP over IoU {{{}}} ({}): {}\n",
            alphas.join(", "),
            self.interpolation,
            fmt(self.map)
        ));
        out
    }
}
