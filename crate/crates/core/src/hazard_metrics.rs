//! Image-level multi-label scoring and BERTScore over rationales.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::category::HazardKind;
use crate::dataset::HazardRecord;
use crate::detection_metrics::ratio;
use crate::error::{Error, Result};
use crate::parser::{join_rationales, HazardAssessment};
use crate::vlm::{embed_tokens, EmbeddingProvider, TokenEmbeddings};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl LabelCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_
    }
}

impl std::ops::AddAssign for LabelCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

pub fn multilabel_counts(pred: &BTreeSet<HazardKind>, gt: &BTreeSet<HazardKind>) -> LabelCounts {
    LabelCounts {
        tp: pred.intersection(gt).count(),
        fp: pred.difference(gt).count(),
        fn_: gt.difference(pred).count(),
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    let s = precision + recall;
    if s <= 0.0 {
        0.0
    } else {
        2.0 * precision * recall / s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrfScore {
    pub fn from_counts(c: LabelCounts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub counts: LabelCounts,
    #[serde(flatten)]
    pub score: PrfScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardMetrics {
    pub counts: LabelCounts,
    pub micro: PrfScore,
    /// Mean over categories that occur in predictions or ground truth.
    pub macro_avg: PrfScore,
    pub per_category: BTreeMap<HazardKind, CategoryScore>,
    pub images: usize,
    pub empty_corpus: bool,
}

/// One image's predicted and reference category sets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelPair {
    pub pred: BTreeSet<HazardKind>,
    pub gt: BTreeSet<HazardKind>,
}

/// Micro averages from summed counts only; per-category and macro numbers
/// need the label sets, see [`aggregate_hazard_metrics`].
pub fn aggregate_counts(per_image: &[LabelCounts]) -> HazardMetrics {
    let mut counts = LabelCounts::default();
    for c in per_image {
        counts += *c;
    }
    HazardMetrics {
        counts,
        micro: PrfScore::from_counts(counts),
        macro_avg: PrfScore::default(),
        per_category: BTreeMap::new(),
        images: per_image.len(),
        empty_corpus: per_image.is_empty(),
    }
}

/// Micro, macro and per-category scores for a corpus.
pub fn aggregate_hazard_metrics(per_image: &[LabelPair]) -> HazardMetrics {
    let counts: Vec<LabelCounts> = per_image.iter().map(|p| multilabel_counts(&p.pred, &p.gt)).collect();
    let mut out = aggregate_counts(&counts);

    for kind in HazardKind::ALL {
        let mut c = LabelCounts::default();
        for p in per_image {
            let single = |s: &BTreeSet<HazardKind>| {
                if s.contains(&kind) {
                    BTreeSet::from([kind])
                } else {
                    BTreeSet::new()
                }
            };
            c += multilabel_counts(&single(&p.pred), &single(&p.gt));
        }
        out.per_category.insert(
            kind,
            CategoryScore {
                counts: c,
                score: PrfScore::from_counts(c),
            },
        );
    }
    let active: Vec<&PrfScore> = out
        .per_category
        .values()
        .filter(|c| c.counts.total() > 0)
        .map(|c| &c.score)
        .collect();
    if !active.is_empty() {
        let n = active.len() as f64;
        out.macro_avg = PrfScore {
            precision: active.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: active.iter().map(|s| s.recall).sum::<f64>() / n,
            f1: active.iter().map(|s| s.f1).sum::<f64>() / n,
        };
    }
    out
}

/// Inverse document frequency per token, `ln((M + 1) / (df + 1))` over a
/// reference corpus of `M` texts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdfTable {
    docs: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut t = IdfTable::default();
        for text in texts {
            t.docs += 1;
            let uniq: BTreeSet<String> = crate::vlm::tokenize(text).into_iter().collect();
            for tok in uniq {
                *t.df.entry(tok).or_default() += 1;
            }
        }
        t
    }

    pub fn weight(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0);
        ((self.docs as f64 + 1.0) / (df as f64 + 1.0)).ln()
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// For each row of `a`, the best cosine similarity to any row of `b`.
fn best_matches(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    a.iter()
        .map(|x| b.iter().map(|y| dot(x, y)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

fn weighted_mean(values: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        None => values.iter().sum::<f64>() / values.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return values.iter().sum::<f64>() / values.len() as f64;
            }
            values.iter().zip(w).map(|(v, w)| v * w).sum::<f64>() / total
        }
    }
}

fn bertscore_inner(cand: &TokenEmbeddings, refr: &TokenEmbeddings, idf: Option<&IdfTable>) -> Result<PrfScore> {
    if cand.is_empty() || refr.is_empty() {
        return Err(Error::InvalidArgument("BERTScore needs non-empty token lists".into()));
    }
    if cand.dim() != refr.dim() {
        return Err(Error::InvalidArgument(format!(
            "embedding dimensions differ: {} vs {}",
            cand.dim(),
            refr.dim()
        )));
    }
    let c: Vec<Vec<f64>> = cand.vectors().iter().map(|v| normalized(v)).collect();
    let r: Vec<Vec<f64>> = refr.vectors().iter().map(|v| normalized(v)).collect();
    let weights = |e: &TokenEmbeddings| idf.map(|t| e.tokens().iter().map(|k| t.weight(k)).collect::<Vec<_>>());
    let (wc, wr) = (weights(cand), weights(refr));
    let precision = weighted_mean(&best_matches(&c, &r), wc.as_deref());
    let recall = weighted_mean(&best_matches(&r, &c), wr.as_deref());
    Ok(PrfScore {
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

/// Greedy max-cosine token matching without idf weighting.
pub fn bertscore(cand: &TokenEmbeddings, refr: &TokenEmbeddings) -> Result<PrfScore> {
    bertscore_inner(cand, refr, None)
}

/// As [`bertscore`], with each token's best match weighted by its idf.
pub fn bertscore_idf(cand: &TokenEmbeddings, refr: &TokenEmbeddings, idf: &IdfTable) -> Result<PrfScore> {
    bertscore_inner(cand, refr, Some(idf))
}

/// Outcome of scoring one image's rationales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RationaleScore {
    Scored(PrfScore),
    /// One side had no rationale text.
    Excluded,
    Failed {
        error: String,
    },
}

/// Concatenates each side's rationales in canonical key order and scores the
/// pair. Missing text on either side excludes the image.
pub fn score_rationales(
    assessment: &HazardAssessment,
    record: &HazardRecord,
    embedder: &dyn EmbeddingProvider,
    idf: Option<&IdfTable>,
) -> RationaleScore {
    let (Some(cand), Some(refr)) = (assessment.rationale_text(), join_rationales(&record.rationales)) else {
        return RationaleScore::Excluded;
    };
    let scored = embed_tokens(&cand, embedder)
        .and_then(|c| embed_tokens(&refr, embedder).map(|r| (c, r)))
        .and_then(|(c, r)| bertscore_inner(&c, &r, idf));
    match scored {
        Ok(s) => RationaleScore::Scored(s),
        Err(e) => {
            log::warn!("rationale scoring failed for {}: {e}", record.image);
            RationaleScore::Failed { error: e.to_string() }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BertScoreSummary {
    /// Mean over scored images; `None` if no image was scored.
    pub mean: Option<PrfScore>,
    pub scored: usize,
    pub excluded_empty: usize,
    pub failed: usize,
}

pub fn summarize_rationales<'a>(scores: impl IntoIterator<Item = &'a RationaleScore>) -> BertScoreSummary {
    let mut out = BertScoreSummary::default();
    let mut sum = PrfScore::default();
    for s in scores {
        match s {
            RationaleScore::Scored(p) => {
                out.scored += 1;
                sum.precision += p.precision;
                sum.recall += p.recall;
                sum.f1 += p.f1;
            }
            RationaleScore::Excluded => out.excluded_empty += 1,
            RationaleScore::Failed { .. } => out.failed += 1,
        }
    }
    if out.scored > 0 {
        let n = out.scored as f64;
        out.mean = Some(PrfScore {
            precision: sum.precision / n,
            recall: sum.recall / n,
            f1: sum.f1 / n,
        });
    }
    out
}
