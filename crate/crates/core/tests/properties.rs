use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use hazguard::dataset::{split_dataset, SplitSpec};
use hazguard::detection::GroundTruth;
use hazguard::detection_metrics::{average_precision, match_detections, RankedPrediction};
use hazguard::detector::letterbox_transform;
use hazguard::hazard_metrics::{aggregate_counts, bertscore, multilabel_counts, LabelCounts};
use hazguard::parser::canonicalize_label;
use hazguard::vlm::TokenEmbeddings;
use hazguard::{
    assign_identifiers, iou, parse_assessment, BoundingBox, Detection, HazardAssessment, HazardKind, ObjectClass,
};

// boxes whose corners sit on a 1/100 grid, so a 100x100 raster is exact
fn grid_box() -> impl Strategy<Value = BoundingBox> {
    (0u32..99, 0u32..99, 1u32..100, 1u32..100).prop_filter_map("inside", |(x, y, w, h)| {
        (x + w <= 100 && y + h <= 100).then(|| {
            let f = |v: u32| f64::from(v) / 100.0;
            BoundingBox::new(f(x) + f(w) / 2.0, f(y) + f(h) / 2.0, f(w), f(h)).unwrap()
        })
    })
}

fn raster_iou(a: &BoundingBox, b: &BoundingBox, n: usize) -> f64 {
    let inside = |bx: &BoundingBox, x: f64, y: f64| {
        let (x1, y1, x2, y2) = bx.corners();
        x >= x1 && x < x2 && y >= y1 && y < y2
    };
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}

fn class() -> impl Strategy<Value = ObjectClass> {
    prop::sample::select(vec![
        ObjectClass::Worker,
        ObjectClass::Excavator,
        ObjectClass::DumpTruck,
    ])
}

fn detection() -> impl Strategy<Value = Detection> {
    (grid_box(), class(), 0.0f64..1.0).prop_map(|(b, c, s)| Detection::new(b, c, s).unwrap())
}

fn kinds() -> impl Strategy<Value = BTreeSet<HazardKind>> {
    prop::collection::btree_set(prop::sample::select(HazardKind::ALL.to_vec()), 0..=4)
}

fn unit_vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
        .prop_filter("non-zero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
}

fn embeddings(vs: Vec<Vec<f64>>) -> TokenEmbeddings {
    let tokens = (0..vs.len()).map(|i| format!("t{i}")).collect();
    TokenEmbeddings::new(tokens, vs).unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / (n(a) * n(b))
}

// largest one-to-one assignment with IoU >= alpha and equal classes
fn max_matching(preds: &[Detection], gts: &[GroundTruth], alpha: f64) -> usize {
    fn go(i: usize, used: u32, ok: &[Vec<bool>], memo: &mut BTreeMap<(usize, u32), usize>) -> usize {
        if i == ok.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, used)) {
            return v;
        }
        let mut best = go(i + 1, used, ok, memo);
        for (g, &fits) in ok[i].iter().enumerate() {
            if fits && used & (1 << g) == 0 {
                best = best.max(1 + go(i + 1, used | (1 << g), ok, memo));
            }
        }
        memo.insert((i, used), best);
        best
    }
    let ok: Vec<Vec<bool>> = preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| g.class == p.class && iou(&p.bbox, &g.bbox) >= alpha)
                .collect()
        })
        .collect();
    go(0, 0, &ok, &mut BTreeMap::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn iou_matches_raster(a in grid_box(), b in grid_box()) {
        prop_assert!((iou(&a, &b) - raster_iou(&a, &b, 100)).abs() < 1e-9);
    }

    #[test]
    fn iou_symmetric_and_bounded(a in grid_box(), b in grid_box()) {
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, iou(&b, &a));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ap_matches_level_scan(flags in prop::collection::vec((0.0f64..1.0, any::<bool>()), 0..12), extra_gt in 0usize..4) {
        let ranked: Vec<RankedPrediction> = flags.iter().map(|&(score, is_tp)| RankedPrediction { score, is_tp }).collect();
        let gt = ranked.iter().filter(|r| r.is_tp).count() + extra_gt;
        let ap = average_precision(&ranked, gt).unwrap();
        if gt == 0 {
            prop_assert_eq!(ap, if ranked.is_empty() { None } else { Some(0.0) });
            return Ok(());
        }
        let mut sorted = ranked.clone();
        sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
        let mut pts = Vec::new();
        let mut tp = 0;
        for (k, r) in sorted.iter().enumerate() {
            tp += usize::from(r.is_tp);
            pts.push((tp as f64 / gt as f64, tp as f64 / (k + 1) as f64));
        }
        let oracle = (0..=10)
            .map(|l| {
                pts.iter()
                    .filter(|(r, _)| *r >= l as f64 / 10.0)
                    .map(|(_, p)| *p)
                    .fold(0.0, f64::max)
            })
            .sum::<f64>() / 11.0;
        prop_assert!((ap.unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn greedy_matching_is_valid_and_bounded(
        preds in prop::collection::vec(detection(), 0..6),
        gts in prop::collection::vec((grid_box(), class()), 0..5),
        alpha in 0.1f64..0.9,
    ) {
        let gts: Vec<GroundTruth> = gts.into_iter().map(|(bbox, class)| GroundTruth { bbox, class }).collect();
        let m = match_detections(&preds, &gts, alpha);
        prop_assert_eq!(m.tp + m.fp, preds.len());
        prop_assert_eq!(m.tp + m.fn_, gts.len());
        let used: BTreeSet<usize> = m.matches.iter().map(|x| x.gt).collect();
        prop_assert_eq!(used.len(), m.tp);
        for x in &m.matches {
            prop_assert!(x.iou >= alpha);
            prop_assert_eq!(preds[x.pred].class, gts[x.gt].class);
        }
        prop_assert!(m.tp <= max_matching(&preds, &gts, alpha));
    }

    #[test]
    fn bertscore_swap_symmetry(a in unit_vectors(5, 4), b in unit_vectors(3, 4)) {
        let (ea, eb) = (embeddings(a), embeddings(b));
        let ab = bertscore(&ea, &eb).unwrap();
        let ba = bertscore(&eb, &ea).unwrap();
        prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
        prop_assert!((ab.recall - ba.precision).abs() < 1e-12);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-12);
    }

    #[test]
    fn bertscore_matches_double_loop(a in unit_vectors(6, 3), b in unit_vectors(4, 3)) {
        let s = bertscore(&embeddings(a.clone()), &embeddings(b.clone())).unwrap();
        let best = |x: &[Vec<f64>], y: &[Vec<f64>]| {
            x.iter().map(|u| y.iter().map(|v| cos(u, v)).fold(f64::MIN, f64::max)).sum::<f64>() / x.len() as f64
        };
        prop_assert!((s.precision - best(&a, &b)).abs() < 1e-9);
        prop_assert!((s.recall - best(&b, &a)).abs() < 1e-9);
    }

    #[test]
    fn bertscore_self_is_one(a in unit_vectors(5, 6)) {
        let e = embeddings(a);
        let s = bertscore(&e, &e).unwrap();
        prop_assert!((s.precision - 1.0).abs() < 1e-9 && (s.recall - 1.0).abs() < 1e-9 && (s.f1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn parser_is_total(s in ".{0,200}") {
        let a = parse_assessment(&s);
        for k in a.rationales.keys() {
            prop_assert!(a.categories.contains(k));
        }
    }

    #[test]
    fn parser_survives_noisy_grammar(
        labels in prop::collection::vec("[a-zA-Z_ -]{1,20}", 0..4),
        noise in "[ <>*\\-:\n]{0,10}",
    ) {
        let text = format!("{noise}Hazards: {}\n{noise}Explanation:\n-{}: text", labels.join(", "), labels.first().cloned().unwrap_or_default());
        let a = parse_assessment(&text);
        prop_assert!(a.categories.iter().all(|k| HazardKind::ALL.contains(k)));
    }

    #[test]
    fn render_parse_round_trip(cats in kinds(), words in prop::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,6}", 4)) {
        let rationales: BTreeMap<HazardKind, String> = cats.iter().zip(&words).map(|(k, w)| (*k, format!("{w}."))).collect();
        let a = HazardAssessment { categories: cats, rationales, parse_warnings: Vec::new() };
        let b = parse_assessment(&a.render());
        prop_assert_eq!(&a.categories, &b.categories);
        prop_assert_eq!(&a.rationales, &b.rationales);
    }

    #[test]
    fn canonicalization_is_idempotent(s in "[A-Za-z _-]{0,30}") {
        if let Some(k) = canonicalize_label(&s) {
            prop_assert_eq!(canonicalize_label(k.key()), Some(k));
        }
    }

    #[test]
    fn identifiers_ignore_input_order(dets in prop::collection::vec(detection(), 0..10), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = dets.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = assign_identifiers(&dets);
        let b = assign_identifiers(&shuffled);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn split_partitions_items(n in 0usize..60, train in 0.0f64..1.0, seed in any::<u64>()) {
        let val = (1.0 - train) / 2.0;
        let spec = SplitSpec::new(train, val, 1.0 - train - val, seed).unwrap();
        let items: Vec<usize> = (0..n).collect();
        let s = split_dataset(&items, &spec).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, items.clone());
        prop_assert_eq!(split_dataset(&items, &spec).unwrap(), s);
    }

    #[test]
    fn counts_obey_set_sizes(pred in kinds(), gt in kinds()) {
        let c = multilabel_counts(&pred, &gt);
        prop_assert_eq!(c.tp + c.fn_, gt.len());
        prop_assert_eq!(c.tp + c.fp, pred.len());
    }

    #[test]
    fn micro_f1_ignores_image_order(counts in prop::collection::vec((0usize..5, 0usize..5, 0usize..5), 0..20)) {
        let cs: Vec<LabelCounts> = counts.iter().map(|&(a, b, c)| LabelCounts::new(a, b, c)).collect();
        let mut rev = cs.clone();
        rev.reverse();
        let (a, b) = (aggregate_counts(&cs), aggregate_counts(&rev));
        prop_assert_eq!(a.micro, b.micro);
        let f = hazguard::hazard_metrics::f1(a.micro.precision, a.micro.recall);
        prop_assert!((a.micro.f1 - f).abs() < 1e-15);
    }

    #[test]
    fn letterbox_round_trip(w in 1u32..4000, h in 1u32..4000, target in 32u32..1280, fx in 0.0f64..1.0, fy in 0.0f64..1.0) {
        let lb = letterbox_transform(w, h, target).unwrap();
        let (x, y) = (fx * f64::from(w), fy * f64::from(h));
        let (u, v) = lb.forward(x, y);
        let (x2, y2) = lb.inverse(u, v);
        prop_assert!((x2 - x).abs() <= 1e-6 * x.abs().max(1.0));
        prop_assert!((y2 - y).abs() <= 1e-6 * y.abs().max(1.0));
        prop_assert!(u >= -1e-9 && u <= f64::from(target) + 1e-9);
        prop_assert!(v >= -1e-9 && v <= f64::from(target) + 1e-9);
    }
}
