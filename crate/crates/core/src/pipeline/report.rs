use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::category::HazardKind;
use crate::error::{Error, Result};
use crate::hazard_metrics::{
    aggregate_hazard_metrics, summarize_rationales, BertScoreSummary, HazardMetrics, LabelCounts, LabelPair,
    RationaleScore,
};
use crate::parser::HazardAssessment;
use crate::prompt::PromptMode;

pub const REPORT_VERSION: u32 = 1;

/// Wall time of each stage of one image, in milliseconds. The stages are
/// taken from consecutive clock readings, so they add up to `total_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub detect_ms: f64,
    /// Prompt construction: identifiers, entity text and template
    /// rendering. Baseline prompts only render the template.
    pub encode_ms: f64,
    pub vlm_ms: f64,
    pub parse_ms: f64,
    pub score_ms: f64,
    pub total_ms: f64,
    /// Latency reported by the backend (the recorded one, for replays).
    pub vlm_reported_ms: f64,
}

pub const STAGES: [&str; 5] = ["detect", "encode", "vlm", "parse", "score"];

impl StageTimings {
    pub fn stage(&self, name: &str) -> f64 {
        match name {
            "detect" => self.detect_ms,
            "encode" => self.encode_ms,
            "vlm" => self.vlm_ms,
            "parse" => self.parse_ms,
            "score" => self.score_ms,
            "total" => self.total_ms,
            "vlm_reported" => self.vlm_reported_ms,
            _ => panic!("unknown stage {name}"),
        }
    }

    pub fn stage_sum(&self) -> f64 {
        STAGES.iter().map(|s| self.stage(s)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub count: usize,
    pub per_class: BTreeMap<String, usize>,
    /// Entity text placed in the prompt.
    pub entities: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageResult {
    pub image: String,
    pub ground_truth: BTreeSet<HazardKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<DetectionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<HazardAssessmentRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<LabelCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<RationaleScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ImageResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Serializable mirror of a parsed assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardAssessmentRecord {
    pub categories: BTreeSet<HazardKind>,
    pub rationales: BTreeMap<HazardKind, String>,
    pub parse_warnings: Vec<String>,
}

impl From<&HazardAssessment> for HazardAssessmentRecord {
    fn from(a: &HazardAssessment) -> Self {
        Self {
            categories: a.categories.clone(),
            rationales: a.rationales.clone(),
            parse_warnings: a.parse_warnings.iter().map(ToString::to_string).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: PromptMode,
    pub template_version: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<String>,
    pub strict_parse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
    pub idf: bool,
    /// How rationales are paired for BERTScore.
    pub rationale_pairing: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub hazards: HazardMetrics,
    pub bertscore: BertScoreSummary,
    pub scored_images: usize,
    pub error_images: usize,
}

impl CorpusMetrics {
    /// Aggregates the successful images of `per_image`.
    pub fn from_images(per_image: &[ImageResult]) -> Self {
        let ok: Vec<&ImageResult> = per_image.iter().filter(|r| r.is_ok()).collect();
        let pairs: Vec<LabelPair> = ok
            .iter()
            .map(|r| LabelPair {
                pred: r.assessment.as_ref().map(|a| a.categories.clone()).unwrap_or_default(),
                gt: r.ground_truth.clone(),
            })
            .collect();
        Self {
            hazards: aggregate_hazard_metrics(&pairs),
            bertscore: summarize_rationales(ok.iter().filter_map(|r| r.rationale.as_ref())),
            scored_images: ok.len(),
            error_images: per_image.len() - ok.len(),
        }
    }

    /// Per-category counts and scores, micro and macro rows, and BERTScore.
    pub fn to_table(&self) -> String {
        let h = &self.hazards;
        let pct = |x: f64| format!("{:.1}", x * 100.0);
        let mut out = String::new();
        out.push_str(&format!(
            "images {} scored, {} errors\n\n",
            self.scored_images, self.error_images
        ));
        out.push_str(&format!(
            "{:<24} {:>5} {:>5} {:>5} {:>7} {:>7} {:>7}\n",
            "category", "tp", "fp", "fn", "P", "R", "F1"
        ));
        for (k, c) in &h.per_category {
            out.push_str(&format!(
                "{:<24} {:>5} {:>5} {:>5} {:>7} {:>7} {:>7}\n",
                k.key(),
                c.counts.tp,
                c.counts.fp,
                c.counts.fn_,
                pct(c.score.precision),
                pct(c.score.recall),
                pct(c.score.f1)
            ));
        }
        for (name, s, c) in [("micro", h.micro, Some(h.counts)), ("macro", h.macro_avg, None)] {
            let (tp, fp, fn_) = c.map_or((String::new(), String::new(), String::new()), |c| {
                (c.tp.to_string(), c.fp.to_string(), c.fn_.to_string())
            });
            out.push_str(&format!(
                "{:<24} {:>5} {:>5} {:>5} {:>7} {:>7} {:>7}\n",
                name,
                tp,
                fp,
                fn_,
                pct(s.precision),
                pct(s.recall),
                pct(s.f1)
            ));
        }
        let b = &self.bertscore;
        match b.mean {
            Some(m) => out.push_str(&format!(
                "\nBERTScore P {:.3} R {:.3} F1 {:.3} over {} images ({} excluded, {} failed)\n",
                m.precision, m.recall, m.f1, b.scored, b.excluded_empty, b.failed
            )),
            None => out.push_str(&format!(
                "\nBERTScore: no scored images ({} excluded, {} failed)\n",
                b.excluded_empty, b.failed
            )),
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub std_ms: f64,
}

impl StageStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let pick = |q: f64| s[((q * (n - 1.0)).round() as usize).min(s.len() - 1)];
        Self {
            mean_ms: mean,
            p50_ms: pick(0.5),
            p95_ms: pick(0.95),
            std_ms: var.sqrt(),
        }
    }
}

/// Stage statistics over a set of per-image timings.
pub fn stage_stats(timings: &[StageTimings]) -> BTreeMap<String, StageStats> {
    STAGES
        .iter()
        .chain(&["total", "vlm_reported"])
        .map(|s| {
            let xs: Vec<f64> = timings.iter().map(|t| t.stage(s)).collect();
            (s.to_string(), StageStats::from_samples(&xs))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSection {
    pub parallelism: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub wall_ms: f64,
    /// Processed images divided by end-to-end wall time.
    pub fps: f64,
    /// Successful images only.
    pub stages: BTreeMap<String, StageStats>,
    pub per_image: BTreeMap<String, StageTimings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub config: ConfigEcho,
    pub per_image: Vec<ImageResult>,
    pub corpus: CorpusMetrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingSection>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON without the timing section; equal across repeated replay runs.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.timing = None;
        copy.to_json()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json("run report", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json() + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_table()).map_err(|e| Error::io(format!("writing {}", txt.display()), e))?;
        Ok(path)
    }

    pub fn error_count(&self) -> usize {
        self.per_image.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn images(&self) -> BTreeSet<&str> {
        self.per_image.iter().map(|r| r.image.as_str()).collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "mode {} | template {} | model {} | backend {}\n",
            self.config.mode, self.config.template_version, self.config.model_name, self.config.backend
        );
        out.push_str(&self.corpus.to_table());
        if let Some(t) = &self.timing {
            out.push_str(&format!(
                "\nFPS {:.2} (wall {:.1} ms, parallelism {})\n",
                t.fps, t.wall_ms, t.parallelism
            ));
            let order = STAGES.iter().chain(&["total", "vlm_reported"]);
            for (stage, s) in order.filter_map(|k| t.stages.get(*k).map(|s| (k, s))) {
                out.push_str(&format!(
                    "  {:<13} mean {:>9.3} ms  p50 {:>9.3}  p95 {:>9.3}\n",
                    stage, s.mean_ms, s.p50_ms, s.p95_ms
                ));
            }
        }
        for r in self.per_image.iter().filter(|r| !r.is_ok()) {
            out.push_str(&format!("error {}: {}\n", r.image, r.error.as_deref().unwrap_or("")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: Option<f64>,
    pub proposed: Option<f64>,
    pub improvement: Option<f64>,
    /// `pp` rows are ratios shown as percentages with differences in points.
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<18} {:>10} {:>10} {:>12}\n",
            "metric", "baseline", "proposed", "improvement"
        );
        for r in &self.rows {
            let pp = r.unit == "pp";
            let show = |x: Option<f64>, signed: bool| x.map_or("-".to_string(), |x| format_cell(x, pp, signed));
            out.push_str(&format!(
                "{:<18} {:>10} {:>10} {:>12}\n",
                r.metric,
                show(r.baseline, false),
                show(r.proposed, false),
                show(r.improvement, true)
            ));
        }
        out
    }

    /// The improvement cell of `metric` as printed in the table.
    pub fn printed_improvement(&self, metric: &str) -> Option<String> {
        let r = self.row(metric)?;
        Some(format_cell(r.improvement?, r.unit == "pp", true))
    }
}

fn format_cell(x: f64, pp: bool, signed: bool) -> String {
    match (pp, signed) {
        (true, false) => format!("{:.1}", x * 100.0),
        (true, true) => format!("{:+.1}", x * 100.0),
        (false, false) => format!("{x:.2}"),
        (false, true) => format!("{x:+.2}"),
    }
}

/// Baseline-versus-proposed deltas for two runs over the same images.
pub fn compare_reports(baseline: &RunReport, proposed: &RunReport) -> Result<Comparison> {
    if baseline.images() != proposed.images() {
        return Err(Error::InvalidArgument("reports cover different image sets".into()));
    }
    let row = |metric: &str, unit: &str, a: Option<f64>, b: Option<f64>| ComparisonRow {
        metric: metric.to_string(),
        baseline: a,
        proposed: b,
        improvement: a.zip(b).map(|(a, b)| b - a),
        unit: unit.to_string(),
    };
    let (ha, hb) = (&baseline.corpus.hazards, &proposed.corpus.hazards);
    let (ba, bb) = (baseline.corpus.bertscore.mean, proposed.corpus.bertscore.mean);
    let fps = |r: &RunReport| r.timing.as_ref().map(|t| t.fps);
    Ok(Comparison {
        rows: vec![
            row("precision", "pp", Some(ha.micro.precision), Some(hb.micro.precision)),
            row("recall", "pp", Some(ha.micro.recall), Some(hb.micro.recall)),
            row("f1", "pp", Some(ha.micro.f1), Some(hb.micro.f1)),
            row("macro_f1", "pp", Some(ha.macro_avg.f1), Some(hb.macro_avg.f1)),
            row("bertscore_p", "abs", ba.map(|s| s.precision), bb.map(|s| s.precision)),
            row("bertscore_r", "abs", ba.map(|s| s.recall), bb.map(|s| s.recall)),
            row("bertscore_f1", "abs", ba.map(|s| s.f1), bb.map(|s| s.f1)),
            row("fps", "abs", fps(baseline), fps(proposed)),
        ],
    })
}
