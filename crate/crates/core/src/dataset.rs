//! Hazard-evaluation manifests: JSONL records, validation, splits and the
//! draft/verdict annotation workflow.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::category::{CategorySet, HazardKind};
use crate::error::{Error, ManifestIssue, Result};
use crate::parser::Parser;
use crate::prompt::{build_prompt, PromptMode, PromptTemplate};
use crate::vlm::{complete, InferenceConfig, VlmBackend};

pub const MANIFEST_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    HistoricalInspection,
    #[default]
    PublicDataset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validation {
    #[default]
    Draft,
    Validated,
    Revised,
    Rejected,
}

impl std::str::FromStr for Validation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "draft" => Ok(Validation::Draft),
            "validated" => Ok(Validation::Validated),
            "revised" => Ok(Validation::Revised),
            "rejected" => Ok(Validation::Rejected),
            other => Err(Error::InvalidArgument(format!("unknown verdict `{other}`"))),
        }
    }
}

/// Snapshot of a record before a verdict changed it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub verdict: Validation,
    pub annotator: String,
    pub timestamp: DateTime<Utc>,
    pub previous_validation: Validation,
    pub previous_hazards: BTreeSet<HazardKind>,
    pub previous_rationales: BTreeMap<HazardKind, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HazardRecord {
    pub image: String,
    pub hazards: BTreeSet<HazardKind>,
    pub rationales: BTreeMap<HazardKind, String>,
    pub source: Source,
    pub validation: Validation,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<HistoryEntry>,
    /// Parser warnings carried over from draft generation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl HazardRecord {
    pub fn new(image: impl Into<String>) -> Self {
        Self {
            image: image.into(),
            hazards: BTreeSet::new(),
            rationales: BTreeMap::new(),
            source: Source::default(),
            validation: Validation::Draft,
            history: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// Invariant violations of this record, as messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.image.trim().is_empty() {
            out.push("empty image reference".to_string());
        }
        for k in self.rationales.keys() {
            if !self.hazards.contains(k) {
                out.push(format!("rationale for `{k}` which is not a listed hazard"));
            }
        }
        if matches!(self.validation, Validation::Validated | Validation::Revised) {
            for k in &self.hazards {
                if self.rationales.get(k).is_none_or(|t| t.trim().is_empty()) {
                    out.push(format!("{:?} record lacks a rationale for `{k}`", self.validation).to_lowercase());
                }
            }
        }
        out
    }

    pub fn in_evaluation(&self) -> bool {
        matches!(self.validation, Validation::Validated | Validation::Revised)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    manifest_version: String,
    category_vocabulary: Vec<HazardKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub version: String,
    pub category_vocabulary: Vec<HazardKind>,
    pub records: Vec<HazardRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION.into(),
            category_vocabulary: HazardKind::ALL.to_vec(),
            records: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Every record, drafts included.
    #[default]
    All,
    /// Only validated and revised records.
    Evaluation,
}

fn issue(line: usize, image: Option<&str>, message: impl Into<String>) -> ManifestIssue {
    ManifestIssue {
        line,
        image: image.map(str::to_string),
        message: message.into(),
    }
}

/// Keys used as hazards or rationale keys that are outside the vocabulary.
fn vocabulary_issues(v: &Value, line: usize, image: Option<&str>) -> Vec<ManifestIssue> {
    let mut out = Vec::new();
    let check = |key: &str, out: &mut Vec<ManifestIssue>, what: &str| {
        if HazardKind::from_key(key).is_none() {
            out.push(issue(
                line,
                image,
                format!("{what} `{key}` is not in the category vocabulary"),
            ));
        }
    };
    if let Some(hs) = v.get("hazards").and_then(Value::as_array) {
        for h in hs {
            if let Some(k) = h.as_str() {
                check(k, &mut out, "hazard");
            }
        }
    }
    if let Some(rs) = v.get("rationales").and_then(Value::as_object) {
        for k in rs.keys() {
            check(k, &mut out, "rationale key");
        }
    }
    out
}

impl Manifest {
    pub fn new(records: Vec<HazardRecord>) -> Self {
        Self {
            records,
            ..Self::default()
        }
    }

    /// Parses JSONL text. Every problem is collected with its line number;
    /// any problem fails the whole load.
    pub fn parse(text: &str, path: &Path, mode: LoadMode) -> Result<Self> {
        let mut manifest = Manifest::default();
        let mut issues = Vec::new();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();

        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: Value = match serde_json::from_str(line) {
                Ok(v) => v,
                Err(e) => {
                    issues.push(issue(n, None, format!("not valid JSON: {e}")));
                    continue;
                }
            };
            if value.get("manifest_version").is_some() {
                if n != 1 {
                    issues.push(issue(n, None, "manifest header must be the first line"));
                    continue;
                }
                match serde_json::from_value::<Header>(value) {
                    Ok(h) => {
                        manifest.version = h.manifest_version;
                        manifest.category_vocabulary = h.category_vocabulary;
                    }
                    Err(e) => issues.push(issue(n, None, format!("bad header: {e}"))),
                }
                continue;
            }
            let image = value.get("image").and_then(Value::as_str).map(str::to_string);
            let vocab = vocabulary_issues(&value, n, image.as_deref());
            if !vocab.is_empty() {
                issues.extend(vocab);
                continue;
            }
            let record: HazardRecord = match serde_json::from_value(value) {
                Ok(r) => r,
                Err(e) => {
                    issues.push(issue(n, image.as_deref(), format!("schema violation: {e}")));
                    continue;
                }
            };
            for p in record.problems() {
                issues.push(issue(n, Some(&record.image), p));
            }
            for h in &record.hazards {
                if !manifest.category_vocabulary.contains(h) {
                    issues.push(issue(
                        n,
                        Some(&record.image),
                        format!("hazard `{h}` is not in the declared vocabulary"),
                    ));
                }
            }
            if let Some(first) = seen.insert(record.image.clone(), n) {
                issues.push(issue(
                    n,
                    Some(&record.image),
                    format!("duplicate image reference (first on line {first})"),
                ));
            }
            manifest.records.push(record);
        }
        if !issues.is_empty() {
            return Err(Error::ManifestInvalid {
                path: path.to_path_buf(),
                issues,
            });
        }
        if mode == LoadMode::Evaluation {
            manifest.records.retain(HazardRecord::in_evaluation);
        }
        Ok(manifest)
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            manifest_version: self.version.clone(),
            category_vocabulary: self.category_vocabulary.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes atomically through a sibling temporary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, self.to_jsonl()).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("replacing {}", path.display()), e))
    }

    pub fn get(&self, image: &str) -> Option<&HazardRecord> {
        self.records.iter().find(|r| r.image == image)
    }

    /// Adds a record or replaces the one with the same image reference.
    pub fn upsert(&mut self, record: HazardRecord) {
        match self.records.iter_mut().find(|r| r.image == record.image) {
            Some(slot) => *slot = record,
            None => self.records.push(record),
        }
    }

    pub fn apply_verdict(
        &mut self,
        image: &str,
        verdict: Validation,
        edits: Option<RecordEdits>,
        annotator: &str,
        at: DateTime<Utc>,
    ) -> Result<&HazardRecord> {
        let idx = self
            .records
            .iter()
            .position(|r| r.image == image)
            .ok_or_else(|| Error::InvalidArgument(format!("no record for `{image}` in manifest")))?;
        let updated = record_validation_verdict(&self.records[idx], verdict, edits, annotator, at)?;
        self.records[idx] = updated;
        Ok(&self.records[idx])
    }
}

pub fn load_manifest(path: &Path, mode: LoadMode) -> Result<Manifest> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading manifest {}", path.display()), e))?;
    Manifest::parse(&text, path, mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        let s = Self {
            train_frac,
            val_frac,
            test_frac,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_frac, self.val_frac, self.test_frac];
        if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(Error::InvalidArgument("split fractions must be non-negative".into()));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then contiguous slices of `round(train·N)` and
/// `round(val·N)` items; the test split takes the rest.
pub fn split_dataset<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    spec.validate()?;
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = ((spec.train_frac * n as f64).round() as usize).min(n);
    let n_val = ((spec.val_frac * n as f64).round() as usize).min(n - n_train);
    let pick = |r: &[usize]| r.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Asks the annotation model for a first draft of one image's labels.
pub fn generate_annotation_draft(
    image_ref: &str,
    image: &[u8],
    backend: &dyn VlmBackend,
    cfg: &InferenceConfig,
    categories: &CategorySet,
    template: &PromptTemplate,
    parser: &Parser,
) -> Result<HazardRecord> {
    cfg.check_annotation_profile()?;
    let prompt = build_prompt(PromptMode::Baseline, &[], categories, template)?;
    let raw = complete(backend, image, &prompt, cfg)?;
    let a = parser.parse(&raw.text);
    let mut record = HazardRecord::new(image_ref);
    record.hazards = a.categories;
    record.rationales = a.rationales;
    record.warnings = a.parse_warnings.iter().map(ToString::to_string).collect();
    Ok(record)
}

/// Annotator corrections applied with a `revised` verdict.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordEdits {
    pub hazards: Option<BTreeSet<HazardKind>>,
    pub rationales: Option<BTreeMap<HazardKind, String>>,
}

impl RecordEdits {
    pub fn is_empty(&self) -> bool {
        self.hazards.is_none() && self.rationales.is_none()
    }
}

/// Returns the record with the verdict applied and the prior state pushed
/// onto its history.
pub fn record_validation_verdict(
    record: &HazardRecord,
    verdict: Validation,
    edits: Option<RecordEdits>,
    annotator: &str,
    at: DateTime<Utc>,
) -> Result<HazardRecord> {
    if annotator.trim().is_empty() {
        return Err(Error::InvalidArgument("annotator id is required".into()));
    }
    let edits = edits.filter(|e| !e.is_empty());
    match (verdict, &edits) {
        (Validation::Draft, _) => return Err(Error::InvalidArgument("`draft` is not a verdict".into())),
        (Validation::Revised, None) => {
            return Err(Error::InvalidArgument("a revised verdict needs edited fields".into()))
        }
        (Validation::Validated | Validation::Rejected, Some(_)) => {
            return Err(Error::InvalidArgument(
                "edits are only accepted with a revised verdict".into(),
            ))
        }
        _ => {}
    }
    let mut out = record.clone();
    out.history.push(HistoryEntry {
        verdict,
        annotator: annotator.to_string(),
        timestamp: at,
        previous_validation: record.validation,
        previous_hazards: record.hazards.clone(),
        previous_rationales: record.rationales.clone(),
    });
    out.validation = verdict;
    if let Some(e) = edits {
        if let Some(h) = e.hazards {
            out.hazards = h;
            out.rationales.retain(|k, _| out.hazards.contains(k));
        }
        if let Some(r) = e.rationales {
            out.rationales.extend(r);
        }
    }
    let problems = out.problems();
    if verdict != Validation::Rejected && !problems.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: {}",
            out.image,
            problems.join("; ")
        )));
    }
    Ok(out)
}

/// Image files (png/jpg/jpeg) directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    for entry in entries {
        let p = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
