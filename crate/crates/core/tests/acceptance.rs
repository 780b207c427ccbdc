//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines show up in plain `cargo test` output.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hazguard::dataset::{split_dataset, HazardRecord, LoadMode, Manifest, SplitSpec, Validation};
use hazguard::detection_metrics::{average_precision, match_detections, RankedPrediction};
use hazguard::detector::{DetectorConfig, FilesDetector};
use hazguard::hazard_metrics::{bertscore, f1, PrfScore};
use hazguard::pipeline::{
    bench, compare_reports, run_pipeline, BackendKind, BenchOptions, Pipeline, RunConfig, RunReport,
};
use hazguard::prompt::encode_detections;
use hazguard::vlm::{FnBackend, InferenceConfig, TokenEmbeddings};
use hazguard::{
    assign_identifiers, iou, parse_assessment, BoundingBox, Detection, DetectionFile, Error, GroundTruth,
    HazardAssessment, HazardKind, ObjectClass, PromptMode,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

// Criteria expected to fail, with the reason recorded in the README.
const KNOWN_FAILURES: &[usize] = &[1];

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fixture() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/site4")
}

// ---------------------------------------------------------------- 1

fn published_f1() -> Outcome {
    let proposed = f1(0.601, 0.437);
    let baseline = f1(0.245, 0.570);
    let ok = (proposed - 0.506).abs() <= 0.0015 && (baseline - 0.345).abs() <= 0.0015;
    check(
        ok,
        format!("f1(0.601,0.437) = {proposed:.4} vs 0.506; f1(0.245,0.570) = {baseline:.4} vs 0.345"),
    )
}

// ---------------------------------------------------------------- 2

fn with_scores(template: &RunReport, f1_value: f64, bert_f1: f64) -> RunReport {
    let mut r = template.clone();
    r.corpus.hazards.micro.f1 = f1_value;
    r.corpus.bertscore.mean = Some(PrfScore {
        precision: bert_f1,
        recall: bert_f1,
        f1: bert_f1,
    });
    r
}

fn printed_improvements() -> Outcome {
    let template = run_pipeline(&replay_config(PromptMode::Baseline)).map_err(|e| e.to_string())?;
    let base = with_scores(&template, 0.345, 0.63);
    let guided = with_scores(&template, 0.506, 0.82);
    let cmp = compare_reports(&base, &guided).map_err(|e| e.to_string())?;
    let f = cmp.printed_improvement("f1").unwrap_or_default();
    let b = cmp.printed_improvement("bertscore_f1").unwrap_or_default();
    check(f == "+16.1" && b == "+0.19", format!("F1 {f} pp, BERTScore {b}"))
}

// ---------------------------------------------------------------- 3

const CLASSES: [ObjectClass; 2] = [ObjectClass::Worker, ObjectClass::Excavator];

// corners on a 1/1000 grid so that a 1000x1000 raster is exact
fn snapped_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let x1 = rng.random_range(0..950u32);
    let y1 = rng.random_range(0..950u32);
    let w = rng.random_range(10..=(1000 - x1).min(400));
    let h = rng.random_range(10..=(1000 - y1).min(400));
    from_grid(x1, y1, w, h)
}

fn from_grid(x1: u32, y1: u32, w: u32, h: u32) -> BoundingBox {
    let f = |v: u32| f64::from(v) / 1000.0;
    BoundingBox::new(f(x1) + f(w) / 2.0, f(y1) + f(h) / 2.0, f(w), f(h)).unwrap()
}

fn jittered(b: &BoundingBox, rng: &mut ChaCha8Rng) -> BoundingBox {
    let (x1, y1, x2, y2) = b.corners();
    let g = |v: f64| (v * 1000.0).round() as i64;
    let mut j = |v: f64| (g(v) + rng.random_range(-30..=30i64)).clamp(0, 1000);
    let (a, c) = (j(x1), j(x2));
    let (bb, d) = (j(y1), j(y2));
    let (x1, x2) = (a.min(c), a.max(c).max(a.min(c) + 5).min(1000));
    let (y1, y2) = (bb.min(d), bb.max(d).max(bb.min(d) + 5).min(1000));
    let x1 = x1.min(x2 - 1);
    let y1 = y1.min(y2 - 1);
    from_grid(x1 as u32, y1 as u32, (x2 - x1) as u32, (y2 - y1) as u32)
}

fn raster_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    const N: usize = 1000;
    let px = |v: f64| ((v * N as f64).round() as usize).min(N);
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let inside = |(x1, y1, x2, y2): (f64, f64, f64, f64), x: f64, y: f64| x >= x1 && x < x2 && y >= y1 && y < y2;
    let (mut inter, mut union) = (0usize, 0usize);
    // pixels outside the joint bounding rectangle are in neither box
    for i in px(ax1.min(bx1))..px(ax2.max(bx2)) {
        for j in px(ay1.min(by1))..px(ay2.max(by2)) {
            let (x, y) = ((i as f64 + 0.5) / N as f64, (j as f64 + 0.5) / N as f64);
            let (ia, ib) = (inside(a.corners(), x, y), inside(b.corners(), x, y));
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// all 11 levels scanned against every prefix of the ranking
fn brute_force_ap(ranked: &[RankedPrediction], total_gt: usize) -> Option<f64> {
    if total_gt == 0 && ranked.is_empty() {
        return None;
    }
    if total_gt == 0 {
        return Some(0.0);
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| ranked[b].score.total_cmp(&ranked[a].score).then(a.cmp(&b)));
    let mut points = Vec::new();
    for k in 1..=order.len() {
        let tp = order[..k].iter().filter(|&&i| ranked[i].is_tp).count();
        points.push((tp, k));
    }
    let mut sum = 0.0;
    for level in 0..=10usize {
        let mut best = 0.0f64;
        for &(tp, k) in &points {
            // recall tp/total_gt >= level/10
            if tp * 10 >= level * total_gt {
                best = best.max(tp as f64 / k as f64);
            }
        }
        sum += best;
    }
    Some(sum / 11.0)
}

fn exhaustive_matching(preds: &[Detection], gts: &[GroundTruth], alpha: f64) -> usize {
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

fn detection_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut ap_bad, mut iou_bad, mut greedy_short) = (0, 0, Vec::new());
    const INSTANCES: usize = 1000;
    for n in 0..INSTANCES {
        let n_gt = rng.random_range(0..=6usize);
        let n_pred = rng.random_range(0..=8usize);
        let gts: Vec<GroundTruth> = (0..n_gt)
            .map(|_| GroundTruth {
                bbox: snapped_box(&mut rng),
                class: CLASSES[rng.random_range(0..2)],
            })
            .collect();
        let preds: Vec<Detection> = (0..n_pred)
            .map(|k| {
                let (bbox, class) = match gts.get(k) {
                    Some(g) if rng.random_bool(0.7) => (jittered(&g.bbox, &mut rng), g.class),
                    _ => (snapped_box(&mut rng), CLASSES[rng.random_range(0..2)]),
                };
                // coarse scores so ties occur
                let score = f64::from(rng.random_range(1..=20u32)) / 20.0;
                Detection::new(bbox, class, score).unwrap()
            })
            .collect();
        let alpha = [0.3, 0.5, 0.7][n % 3];

        let m = match_detections(&preds, &gts, alpha);
        let ranked: Vec<RankedPrediction> = preds
            .iter()
            .zip(&m.pred_is_tp)
            .map(|(p, &is_tp)| RankedPrediction { score: p.score, is_tp })
            .collect();
        let got = average_precision(&ranked, gts.len()).map_err(|e| e.to_string())?;
        let want = brute_force_ap(&ranked, gts.len());
        let agree = match (got, want) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
            (None, None) => true,
            _ => false,
        };
        ap_bad += usize::from(!agree);

        if let (Some(p), Some(g)) = (preds.first(), gts.first()) {
            iou_bad += usize::from((iou(&p.bbox, &g.bbox) - raster_iou(&p.bbox, &g.bbox)).abs() > 1e-3);
        }

        let best = exhaustive_matching(&preds, &gts, alpha);
        if m.tp != best {
            greedy_short.push(format!("instance {n}: greedy {} < max {best}", m.tp));
        }
    }
    for line in &greedy_short {
        println!("    discrepancy {line}");
    }
    let elapsed = start.elapsed();
    let agree = INSTANCES - greedy_short.len();
    check(
        ap_bad == 0 && iou_bad == 0 && agree * 100 >= 99 * INSTANCES && elapsed < Duration::from_secs(60),
        format!(
            "{INSTANCES} instances: AP mismatches {ap_bad}, IoU mismatches {iou_bad}, greedy optimal {agree}/{INSTANCES}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn emb(vs: Vec<Vec<f64>>) -> TokenEmbeddings {
    let tokens = (0..vs.len()).map(|i| format!("t{i}")).collect();
    TokenEmbeddings::new(tokens, vs).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

fn double_loop(cand: &[Vec<f64>], refr: &[Vec<f64>]) -> (f64, f64, f64) {
    let mut p = 0.0;
    for c in cand {
        let mut best = f64::NEG_INFINITY;
        for r in refr {
            best = best.max(cosine(c, r));
        }
        p += best;
    }
    let mut r = 0.0;
    for g in refr {
        let mut best = f64::NEG_INFINITY;
        for c in cand {
            best = best.max(cosine(c, g));
        }
        r += best;
    }
    let (p, r) = (p / cand.len() as f64, r / refr.len() as f64);
    (p, r, 2.0 * p * r / (p + r))
}

fn bertscore_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let random_vecs = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                v[0] += 2.0; // keep norms away from zero
                v
            })
            .collect()
    };

    let same = random_vecs(5, &mut rng);
    let id = bertscore(&emb(same.clone()), &emb(same)).map_err(|e| e.to_string())?;
    let identity_ok = [id.precision, id.recall, id.f1].iter().all(|x| (x - 1.0).abs() <= 1e-9);

    let t1 = vec![1.0, 0.0];
    let g1 = vec![0.9, 0.19f64.sqrt()];
    let g2 = vec![0.5, 0.75f64.sqrt()];
    let fixed = bertscore(&emb(vec![t1]), &emb(vec![g1, g2])).map_err(|e| e.to_string())?;
    let fixed_ok = (fixed.precision - 0.9).abs() <= 1e-12
        && (fixed.recall - 0.7).abs() <= 1e-12
        && (fixed.f1 - 0.7875).abs() <= 1e-12;

    let (mut swap_bad, mut oracle_bad) = (0, 0);
    for _ in 0..200 {
        let (nc, nr) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let (c, r) = (random_vecs(nc, &mut rng), random_vecs(nr, &mut rng));
        let ab = bertscore(&emb(c.clone()), &emb(r.clone())).map_err(|e| e.to_string())?;
        let ba = bertscore(&emb(r.clone()), &emb(c.clone())).map_err(|e| e.to_string())?;
        swap_bad += usize::from((ab.precision - ba.recall).abs() > 1e-12 || (ab.recall - ba.precision).abs() > 1e-12);
        let (p, rr, f) = double_loop(&c, &r);
        oracle_bad +=
            usize::from((ab.precision - p).abs() > 1e-9 || (ab.recall - rr).abs() > 1e-9 || (ab.f1 - f).abs() > 1e-9);
    }
    let elapsed = start.elapsed();
    check(
        identity_ok && fixed_ok && swap_bad == 0 && oracle_bad == 0 && elapsed < Duration::from_secs(10),
        format!(
            "identity ({:.9},{:.9},{:.9}); 1x2 example P {:.4} R {:.4} F1 {:.4}; swap failures {swap_bad}/200; oracle failures {oracle_bad}/200; {:.2}s",
            id.precision,
            id.recall,
            id.f1,
            fixed.precision,
            fixed.recall,
            fixed.f1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 5

const FIGURE_TRANSCRIPTS: [&str; 4] = [
    r#"<p>Hazards: caught_between_hazard</p> <p>Explanation:</p> <ul style="list-style-type: none"> -caught_between_hazard: The worker w1 is walking close to an excavator ex1 posing a risk of being struck."#,
    r#"<p>Hazards: ppe_non_compliance, fall_hazard</p> <p>Explanation:</p> <ul style="list-style-type: none"> -ppe_non_compliance: The worker standing on the edge is not wearing a hard hat or high-visibility safety vest. -fall_hazard: The worker is standing on the edge of an elevated structure without any fall protection."#,
    r#"<p>Hazards: ppe_non_compliance, unsafe_environment</p> <p>Explanation:</p> <ul style="list-style-type: none"> -ppe_non_compliance: The workers (w1, w2, w3, w4) are not wearing high-visibility safety vests. -unsafe_environment: There is scattered scaffolding material on the ground, which can cause tripping hazards."#,
    r#"<p>Hazards: fall_hazard, caught_between_hazard</p> <p>Explanation:</p> <ul style="list-style-type: none"> -fall_hazard: Worker w1 is standing, and w2 is crouching on elevated rebar structures without visible fall protection such as harnesses or guardrails. -caught_between_hazard: Workers w5 and w7 are working closely among dense steel rebar, posing a risk of being caught or pinned between the bars."#,
];

fn fuzz_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 22] = [
        "Hazards:",
        "hazards :",
        "Explanation:",
        "-",
        "*",
        "\n",
        "<p>",
        "</p>",
        "<ul>",
        ",",
        " ",
        "none",
        "fall_hazard",
        "PPE",
        "caught between",
        "unsafe environment",
        "electrical",
        ":",
        "**",
        "Hazards: :",
        "\u{2014}",
        "ñ\u{0}",
    ];
    let mut s = String::new();
    for _ in 0..rng.random_range(0..40) {
        if rng.random_bool(0.8) {
            s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        } else {
            s.push(char::from_u32(rng.random_range(0..0x3000)).unwrap_or('?'));
        }
    }
    s
}

fn parser_corpus() -> Outcome {
    use HazardKind::*;
    let start = Instant::now();
    let expected: [(&[HazardKind], usize); 4] = [
        (&[CaughtBetweenHazard], 1),
        (&[PpeNonCompliance, FallHazard], 2),
        (&[PpeNonCompliance, UnsafeEnvironment], 2),
        (&[FallHazard, CaughtBetweenHazard], 2),
    ];
    let mut notes = Vec::new();
    let mut ok = true;
    let mut parsed = Vec::new();
    for (i, (raw, (cats, n))) in FIGURE_TRANSCRIPTS.iter().zip(expected).enumerate() {
        let a = parse_assessment(raw);
        let want: BTreeSet<HazardKind> = cats.iter().copied().collect();
        if a.categories != want || a.rationales.len() != n {
            ok = false;
            notes.push(format!(
                "transcript {} gave {:?} with {} rationales",
                i + 1,
                a.categories,
                a.rationales.len()
            ));
        }
        parsed.push(a);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lossy = 0;
    for i in 0..200 {
        let a = if i < parsed.len() {
            parsed[i].clone()
        } else {
            let mut a = HazardAssessment::default();
            for k in HazardKind::ALL {
                if rng.random_bool(0.5) {
                    a.categories.insert(k);
                    if rng.random_bool(0.7) {
                        a.rationales.insert(
                            k,
                            format!(
                                "worker w{} near edge {}.",
                                rng.random_range(1..9),
                                rng.random_range(0..100)
                            ),
                        );
                    }
                }
            }
            a
        };
        let back = parse_assessment(&a.render());
        lossy += usize::from(back.categories != a.categories || back.rationales != a.rationales);
    }

    let canonical: BTreeSet<&str> = HazardKind::ALL.iter().map(|k| k.key()).collect();
    let mut fuzz_bad = 0;
    for _ in 0..100 {
        let s = fuzz_string(&mut rng);
        match catch_unwind(|| parse_assessment(&s)) {
            Ok(a) => {
                let keys_ok = a.categories.iter().all(|k| canonical.contains(k.key()));
                let subset = a.rationales.keys().all(|k| a.categories.contains(k));
                fuzz_bad += usize::from(!(keys_ok && subset));
            }
            Err(_) => fuzz_bad += 1,
        }
    }
    let elapsed = start.elapsed();
    notes.push(format!(
        "4 transcripts, round trip losses {lossy}/200, fuzz failures {fuzz_bad}/100, {:.2}s",
        elapsed.as_secs_f64()
    ));
    check(
        ok && lossy == 0 && fuzz_bad == 0 && elapsed < Duration::from_secs(5),
        notes.join("; "),
    )
}

// ---------------------------------------------------------------- 6

fn identifier_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let classes = [ObjectClass::Worker, ObjectClass::Excavator, ObjectClass::DumpTruck];
    let mut variant = 0;
    for _ in 0..500 {
        let n = rng.random_range(0..12);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                // coarse grid makes equal centers common
                let c = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(1..10u32)) / 10.0;
                let bbox = BoundingBox::new(c(&mut rng), c(&mut rng), 0.05, 0.05).unwrap();
                let score = f64::from(rng.random_range(1..5u32)) / 4.0;
                Detection::new(bbox, classes[rng.random_range(0..3)], score).unwrap()
            })
            .collect();
        let reference = assign_identifiers(&dets);
        for _ in 0..3 {
            let mut shuffled = dets.clone();
            shuffled.shuffle(&mut rng);
            variant += usize::from(assign_identifiers(&shuffled) != reference);
        }
    }

    let workers = [
        Detection::new(
            BoundingBox::new(0.590, 0.514, 0.04, 0.12).unwrap(),
            ObjectClass::Worker,
            0.88,
        )
        .unwrap(),
        Detection::new(
            BoundingBox::new(0.558, 0.518, 0.04, 0.12).unwrap(),
            ObjectClass::Worker,
            0.91,
        )
        .unwrap(),
    ];
    let ids = assign_identifiers(&workers);
    let example_ok = ids.len() == 2
        && ids[0].id == "w1"
        && ids[0].detection.bbox.cx() == 0.558
        && ids[1].id == "w2"
        && ids[1].detection.bbox.cx() == 0.590;
    let text = encode_detections(&ids);
    let text_ok = text == "Worker w1: center=0.558,0.518, w2: center=0.590,0.514";
    check(
        variant == 0 && example_ok && text_ok,
        format!("permutation changes {variant}/1500; example -> \"{text}\""),
    )
}

// ---------------------------------------------------------------- 7

fn replay_config(mode: PromptMode) -> RunConfig {
    let f = fixture();
    let mut cfg = RunConfig::new(
        mode,
        f.join("manifest.jsonl"),
        InferenceConfig::evaluation("fixture-vlm"),
    );
    cfg.backend = BackendKind::Replay;
    cfg.transcripts = Some(f.join("transcripts"));
    cfg.detector = Some(DetectorConfig::files(f.join("detections")));
    cfg
}

fn replay_determinism() -> Outcome {
    let start = Instant::now();
    let run = |mode| run_pipeline(&replay_config(mode)).map_err(|e| e.to_string());
    let (g1, g2, b) = (
        run(PromptMode::DetectionGuided)?,
        run(PromptMode::DetectionGuided)?,
        run(PromptMode::Baseline)?,
    );
    let identical = g1.deterministic_json() == g2.deterministic_json();

    let same_inputs = g1.per_image.len() == b.per_image.len()
        && g1
            .per_image
            .iter()
            .zip(&b.per_image)
            .all(|(g, b)| g.image == b.image && g.ground_truth == b.ground_truth);
    let digests_differ = g1
        .per_image
        .iter()
        .zip(&b.per_image)
        .all(|(g, b)| g.prompt_digest.is_some() && b.prompt_digest.is_some() && g.prompt_digest != b.prompt_digest);
    let errors = g1.error_count() + b.error_count();
    let elapsed = start.elapsed();
    check(
        identical && same_inputs && digests_differ && errors == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{} images, guided runs identical: {identical}, baseline/guided share images and labels: {same_inputs}, digests differ: {digests_differ}, F1 {:.3} -> {:.3}, {:.2}s",
            g1.per_image.len(),
            b.corpus.hazards.micro.f1,
            g1.corpus.hazards.micro.f1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 8

// site4 with 40 file-backed detections per image
fn dense_fixture(dir: &Path) -> Result<Vec<HazardRecord>, String> {
    let f = fixture();
    let records = hazguard::dataset::load_manifest(&f.join("manifest.jsonl"), LoadMode::Evaluation)
        .map_err(|e| e.to_string())?
        .records;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for r in &records {
        let src = f.join(&r.image);
        let dst = dir.join(&r.image);
        std::fs::create_dir_all(dst.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::copy(&src, &dst).map_err(|e| e.to_string())?;
        let detections = (0..40)
            .map(|_| {
                let class = ObjectClass::ALL[rng.random_range(0..ObjectClass::ALL.len())];
                let bbox = BoundingBox::new(rng.random_range(0.1..0.9), rng.random_range(0.1..0.9), 0.05, 0.1).unwrap();
                Detection::new(bbox, class, rng.random_range(0.3..1.0)).unwrap()
            })
            .collect();
        let file = DetectionFile {
            image: r.image.clone(),
            detections,
        };
        let path = dir.join("detections").join(&r.image).with_extension("json");
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(path, serde_json::to_string(&file).unwrap()).map_err(|e| e.to_string())?;
    }
    Ok(records)
}

fn overhead_accounting() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let records = dense_fixture(tmp.path())?;
    let vlm = Arc::new(FnBackend::new("instant", |_req: &_| Ok("Hazards: none".to_string())));
    let cfg = InferenceConfig::evaluation("none");
    let baseline = Pipeline::new(PromptMode::Baseline, vlm.clone(), cfg.clone());
    let guided = Pipeline::new(PromptMode::DetectionGuided, vlm, cfg)
        .with_detector(Arc::new(FilesDetector::new(tmp.path().join("detections"), 0.25)));

    let report = bench(
        &baseline,
        &guided,
        &records,
        tmp.path(),
        BenchOptions {
            repeats: 200,
            warmup: 10,
        },
    )
    .map_err(|e| e.to_string())?;
    let o = &report.overhead;
    let encode = report.guided.mean("encode");

    // per image, the stages partition the end-to-end time
    let run = guided.run(&records, tmp.path()).map_err(|e| e.to_string())?;
    let partition_ok = run.timing.as_ref().is_some_and(|t| {
        t.per_image
            .values()
            .all(|s| (s.stage_sum() - s.total_ms).abs() <= 0.02 * s.total_ms)
    });

    check(
        o.relative_gap <= 0.02 && encode < 1.0 && partition_ok && report.guided.errors == 0,
        format!(
            "overhead {:.4} ms vs detect+encode {:.4} ms (gap {:.2}%), guided encode {:.4} ms/image, stage sums match totals: {partition_ok}",
            o.total_ms,
            o.detect_encode_ms,
            o.relative_gap * 100.0,
            encode
        ),
    )
}

// ---------------------------------------------------------------- 9

fn dataset_integrity() -> Outcome {
    let items: Vec<usize> = (0..10).collect();
    let split = split_dataset(&items, &SplitSpec::new(0.7, 0.2, 0.1, 42).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let sizes = (split.train.len(), split.val.len(), split.test.len());

    let header = r#"{"manifest_version":"1","category_vocabulary":["ppe_non_compliance","fall_hazard","caught_between_hazard","unsafe_environment"]}"#;
    let good = r#"{"image":"a.jpg","hazards":["fall_hazard"],"rationales":{"fall_hazard":"open edge"},"source":"public_dataset","validation":"validated"}"#;
    let vocab = r#"{"image":"b.jpg","hazards":["electrical_hazard"],"rationales":{},"source":"public_dataset","validation":"draft"}"#;
    let subset = r#"{"image":"c.jpg","hazards":[],"rationales":{"fall_hazard":"edge"},"source":"public_dataset","validation":"draft"}"#;
    let rejected_with = |bad: &str, image: &str| {
        let text = format!("{header}\n{good}\n{bad}\n");
        match Manifest::parse(&text, Path::new("m.jsonl"), LoadMode::All) {
            Err(Error::ManifestInvalid { issues, .. }) => {
                issues.len() == 1 && issues[0].line == 3 && issues[0].image.as_deref() == Some(image)
            }
            _ => false,
        }
    };
    let vocab_ok = rejected_with(vocab, "b.jpg");
    let subset_ok = rejected_with(subset, "c.jpg");

    let draft = r#"{"image":"d.jpg","hazards":[],"rationales":{},"source":"public_dataset","validation":"draft"}"#;
    let rejected = r#"{"image":"e.jpg","hazards":["fall_hazard"],"rationales":{"fall_hazard":"edge"},"source":"public_dataset","validation":"rejected"}"#;
    let text = format!("{header}\n{good}\n{draft}\n{rejected}\n");
    let eval = Manifest::parse(&text, Path::new("m.jsonl"), LoadMode::Evaluation).map_err(|e| e.to_string())?;
    let all = Manifest::parse(&text, Path::new("m.jsonl"), LoadMode::All).map_err(|e| e.to_string())?;
    let filter_ok =
        eval.records.len() == 1 && eval.records[0].validation == Validation::Validated && all.records.len() == 3;

    check(
        sizes == (7, 2, 1) && vocab_ok && subset_ok && filter_ok,
        format!(
            "split sizes {sizes:?}; vocabulary violation rejected at its line: {vocab_ok}; rationale-subset violation rejected at its line: {subset_ok}; evaluation load keeps {} of {}",
            eval.records.len(),
            all.records.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("F1 cross-check against published values", published_f1),
        ("comparison table improvements", printed_improvements),
        ("detection metric oracles", detection_oracles),
        ("BERTScore suite", bertscore_suite),
        ("parser corpus", parser_corpus),
        ("identifier determinism", identifier_determinism),
        ("replay determinism", replay_determinism),
        ("overhead accounting", overhead_accounting),
        ("dataset integrity", dataset_integrity),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                println!("criterion {n} FAIL  {name}: {detail}");
                if !KNOWN_FAILURES.contains(&n) {
                    unexpected.push(n);
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
