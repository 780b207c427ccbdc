//! End-to-end runs: detect, encode, ask the VLM, parse, score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::category::CategorySet;
use crate::dataset::{load_manifest, HazardRecord, LoadMode};
use crate::detection::{assign_identifiers, ClassList, Detection};
use crate::detector::{build_detector, Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::hazard_metrics::{multilabel_counts, score_rationales, IdfTable, RationaleScore};
use crate::parser::{HazardAssessment, Parser, SynonymTable};
use crate::prompt::{encode_detections, render_prompt, PromptMode, PromptTemplate};
use crate::vlm::{
    complete, request_digest, EmbeddingProvider, FileCacheEmbedder, HashingEmbedder, HttpEmbedder, InferenceConfig,
    LiveBackend, RecordingBackend, ReplayBackend, VlmBackend,
};

mod bench;
mod report;

pub use bench::{bench, BenchOptions, BenchReport, ModeStats, Overhead};
pub use report::{
    compare_reports, stage_stats, Comparison, ComparisonRow, ConfigEcho, CorpusMetrics, DetectionSummary,
    HazardAssessmentRecord, ImageResult, RunReport, StageStats, StageTimings, TimingSection, REPORT_VERSION, STAGES,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Live,
    Replay,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(BackendKind::Live),
            "replay" => Ok(BackendKind::Replay),
            other => Err(Error::Config(format!("unknown backend `{other}` (live|replay)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: PromptMode,
    pub manifest: PathBuf,
    /// Image references resolve against this; defaults to the manifest's
    /// directory.
    pub images_dir: Option<PathBuf>,
    pub detector: Option<DetectorConfig>,
    pub class_list: Option<PathBuf>,
    pub vlm: InferenceConfig,
    pub backend: BackendKind,
    /// Replay directory, or where a live run records transcripts.
    pub transcripts: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub strict_parse: bool,
    /// `hashing`, a cache file, or an `http(s)://` embeddings endpoint.
    pub embeddings: Option<String>,
    pub idf: bool,
    pub parallelism: usize,
    pub output_dir: Option<PathBuf>,
    /// Run and time the detector in baseline mode too.
    pub time_detector_in_baseline: bool,
}

impl RunConfig {
    pub fn new(mode: PromptMode, manifest: impl Into<PathBuf>, vlm: InferenceConfig) -> Self {
        Self {
            mode,
            manifest: manifest.into(),
            images_dir: None,
            detector: None,
            class_list: None,
            vlm,
            backend: BackendKind::Live,
            transcripts: None,
            template: None,
            categories: None,
            synonyms: None,
            strict_parse: false,
            embeddings: None,
            idf: false,
            parallelism: 1,
            output_dir: None,
            time_detector_in_baseline: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        if self.mode == PromptMode::DetectionGuided && self.detector.is_none() {
            return Err(Error::Config("detection-guided runs need a detector source".into()));
        }
        if self.backend == BackendKind::Replay && self.transcripts.is_none() {
            return Err(Error::Config("the replay backend needs a transcripts directory".into()));
        }
        self.vlm.validate()?;
        if let Some(d) = &self.detector {
            d.validate()?;
        }
        Ok(())
    }

    pub fn images_dir(&self) -> PathBuf {
        self.images_dir
            .clone()
            .unwrap_or_else(|| self.manifest.parent().map(Path::to_path_buf).unwrap_or_default())
    }
}

pub fn build_embedder(spec: &str) -> Result<Arc<dyn EmbeddingProvider>> {
    if spec == "hashing" {
        Ok(Arc::new(HashingEmbedder::default()))
    } else if spec.starts_with("http://") || spec.starts_with("https://") {
        Ok(Arc::new(HttpEmbedder::new(
            spec,
            "default",
            std::time::Duration::from_secs(60),
        )?))
    } else {
        FileCacheEmbedder::load(Path::new(spec))
            .map(|e| Arc::new(e) as Arc<dyn EmbeddingProvider>)
            .map_err(|e| Error::Config(format!("embeddings {spec}: {e}")))
    }
}

/// Everything needed to process images, with the backends as trait objects
/// so tests can swap in fakes.
pub struct Pipeline {
    pub mode: PromptMode,
    pub detector: Option<Arc<dyn Detector>>,
    pub vlm: Arc<dyn VlmBackend>,
    pub inference: InferenceConfig,
    pub template: PromptTemplate,
    pub categories: CategorySet,
    pub parser: Parser,
    pub embedder: Option<Arc<dyn EmbeddingProvider>>,
    pub idf: Option<IdfTable>,
    pub parallelism: usize,
    pub time_detector_in_baseline: bool,
    /// Shown in the config echo.
    pub detector_label: Option<String>,
}

#[derive(Default)]
struct Trace {
    detections: Option<Vec<Detection>>,
    entities: String,
    prompt: Option<String>,
    response: Option<String>,
    assessment: Option<HazardAssessment>,
    rationale: Option<RationaleScore>,
}

/// Per-image outcome with its stage timings.
#[derive(Debug, Clone)]
pub struct Processed {
    pub result: ImageResult,
    pub timings: StageTimings,
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl Pipeline {
    pub fn new(mode: PromptMode, vlm: Arc<dyn VlmBackend>, inference: InferenceConfig) -> Self {
        Self {
            mode,
            detector: None,
            vlm,
            inference,
            template: PromptTemplate::default_for(mode),
            categories: CategorySet::default(),
            parser: Parser::default(),
            embedder: None,
            idf: None,
            parallelism: 1,
            time_detector_in_baseline: false,
            detector_label: None,
        }
    }

    pub fn with_detector(mut self, detector: Arc<dyn Detector>) -> Self {
        self.detector_label = Some(detector.id().to_string());
        self.detector = Some(detector);
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    /// Builds detector, backend, template and parser from a run config.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let vlm: Arc<dyn VlmBackend> = match (cfg.backend, &cfg.transcripts) {
            (BackendKind::Replay, Some(dir)) => Arc::new(ReplayBackend::new(dir)),
            (BackendKind::Live, Some(dir)) => Arc::new(RecordingBackend::new(LiveBackend::new(&cfg.vlm)?, dir)),
            (BackendKind::Live, None) => Arc::new(LiveBackend::new(&cfg.vlm)?),
            (BackendKind::Replay, None) => unreachable!("validated"),
        };
        let mut p = Pipeline::new(cfg.mode, vlm, cfg.vlm.clone());
        if let Some(path) = &cfg.template {
            p.template = PromptTemplate::load(path)?;
        }
        p.template.check(cfg.mode)?;
        if let Some(path) = &cfg.categories {
            p.categories = CategorySet::load(path)?;
        }
        let synonyms = match &cfg.synonyms {
            Some(path) => SynonymTable::load(path)?,
            None => SynonymTable::default(),
        };
        p.parser = Parser::new(synonyms, cfg.strict_parse);
        let wants_detector = cfg.mode == PromptMode::DetectionGuided || cfg.time_detector_in_baseline;
        if let (true, Some(dcfg)) = (wants_detector, &cfg.detector) {
            let mut dcfg = dcfg.clone();
            if let Some(path) = &cfg.class_list {
                dcfg.class_list = ClassList::load(path)?;
            }
            let label = serde_json::to_value(&dcfg.source)
                .ok()
                .and_then(|v| v.get("backend").and_then(|b| b.as_str()).map(str::to_string));
            p = p.with_detector(Arc::from(build_detector(&dcfg)?));
            p.detector_label = label;
        }
        p.embedder = Some(build_embedder(cfg.embeddings.as_deref().unwrap_or("hashing"))?);
        p.parallelism = cfg.parallelism;
        p.time_detector_in_baseline = cfg.time_detector_in_baseline;
        Ok(p)
    }

    pub fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            mode: self.mode,
            template_version: self.template.version.clone(),
            model_name: self.inference.model_name.clone(),
            temperature: self.inference.temperature,
            max_tokens: self.inference.max_tokens,
            backend: self.vlm.id().to_string(),
            detector: self.detector_label.clone(),
            strict_parse: self.parser.is_strict(),
            embedder: self.embedder.as_ref().map(|e| e.id().to_string()),
            idf: self.idf.is_some(),
            rationale_pairing: "concatenated in category key order".into(),
        }
    }

    fn blank_result(record: &HazardRecord) -> ImageResult {
        ImageResult {
            image: record.image.clone(),
            ground_truth: record.hazards.clone(),
            detections: None,
            prompt_digest: None,
            response: None,
            assessment: None,
            counts: None,
            rationale: None,
            error: None,
        }
    }

    /// Runs one image. Errors are captured in the result, never returned.
    pub fn process(&self, record: &HazardRecord, image: &[u8]) -> Processed {
        self.process_with(record, image, true)
    }

    pub(crate) fn process_with(&self, record: &HazardRecord, image: &[u8], score: bool) -> Processed {
        let mut trace = Trace::default();
        let mut t = StageTimings::default();
        let start = Instant::now();
        let outcome = self.process_inner(record, image, score, &mut trace, &mut t, start);
        t.total_ms = ms(start.elapsed());

        // bookkeeping below is outside the timed region
        let mut result = Self::blank_result(record);
        if let Some(prompt) = &trace.prompt {
            result.prompt_digest = Some(request_digest(image, prompt, &self.inference.model_name));
        }
        if let Some(d) = &trace.detections {
            let mut per_class = BTreeMap::new();
            for x in d {
                *per_class.entry(x.class.name().to_string()).or_insert(0) += 1;
            }
            let entities = match self.mode {
                PromptMode::DetectionGuided => std::mem::take(&mut trace.entities),
                PromptMode::Baseline => encode_detections(&assign_identifiers(d)),
            };
            result.detections = Some(DetectionSummary {
                count: d.len(),
                per_class,
                entities,
            });
        }
        match outcome {
            Ok(()) => {
                let a = trace.assessment.take().unwrap_or_default();
                result.counts = Some(multilabel_counts(&a.categories, &record.hazards));
                result.assessment = Some((&a).into());
                result.response = trace.response.take();
                result.rationale = trace.rationale.take();
            }
            Err(e) => result.error = Some(e.to_string()),
        }
        Processed { result, timings: t }
    }

    fn process_inner(
        &self,
        record: &HazardRecord,
        image: &[u8],
        score: bool,
        trace: &mut Trace,
        t: &mut StageTimings,
        start: Instant,
    ) -> Result<()> {
        let mut mark = start;
        let mut lap = || {
            let now = Instant::now();
            let d = ms(now - mark);
            mark = now;
            d
        };

        let run_detector = self.mode == PromptMode::DetectionGuided || self.time_detector_in_baseline;
        let detections = match (&self.detector, run_detector) {
            (Some(d), true) => Some(d.detect(&record.image, image)),
            _ => None,
        };
        t.detect_ms = lap();
        trace.detections = detections.transpose()?;

        let ids = match (&trace.detections, self.mode) {
            (Some(d), PromptMode::DetectionGuided) => {
                let ids = assign_identifiers(d);
                trace.entities = encode_detections(&ids);
                ids
            }
            _ => Vec::new(),
        };
        let prompt = render_prompt(self.mode, &trace.entities, ids.len(), &self.categories, &self.template)?;
        // freed here so the cost lands in this stage rather than after the last lap
        drop(ids);
        t.encode_ms = lap();

        let raw = complete(self.vlm.as_ref(), image, &prompt, &self.inference);
        t.vlm_ms = lap();
        trace.prompt = Some(prompt.text);
        let raw = raw?;
        t.vlm_reported_ms = ms(raw.latency);

        let assessment = self.parser.parse(&raw.text);
        t.parse_ms = lap();

        if let (Some(e), true) = (&self.embedder, score) {
            trace.rationale = Some(score_rationales(&assessment, record, e.as_ref(), self.idf.as_ref()));
        }
        t.score_ms = lap();

        trace.assessment = Some(assessment);
        trace.response = Some(raw.text);
        Ok(())
    }

    /// Processes every record with up to `parallelism` workers. Results keep
    /// the record order.
    pub fn run(&self, records: &[HazardRecord], images_dir: &Path) -> Result<RunReport> {
        let wall = Instant::now();
        let work = |r: &HazardRecord| -> Processed {
            let path = images_dir.join(&r.image);
            match std::fs::read(&path) {
                Ok(bytes) => self.process(r, &bytes),
                Err(e) => {
                    let mut result = Self::blank_result(r);
                    result.error = Some(Error::io(format!("reading image {}", path.display()), e).to_string());
                    Processed {
                        result,
                        timings: StageTimings::default(),
                    }
                }
            }
        };
        let processed: Vec<Processed> = if self.parallelism > 1 {
            use rayon::prelude::*;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.parallelism)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            pool.install(|| records.par_iter().map(work).collect())
        } else {
            records.iter().map(work).collect()
        };
        let wall_ms = ms(wall.elapsed());

        let ok_timings: Vec<StageTimings> = processed
            .iter()
            .filter(|p| p.result.is_ok())
            .map(|p| p.timings)
            .collect();
        let per_image_timing = processed.iter().map(|p| (p.result.image.clone(), p.timings)).collect();
        let per_image: Vec<ImageResult> = processed.into_iter().map(|p| p.result).collect();
        let n = per_image.len();
        Ok(RunReport {
            report_version: REPORT_VERSION,
            config: self.echo(),
            corpus: CorpusMetrics::from_images(&per_image),
            per_image,
            timing: Some(TimingSection {
                parallelism: self.parallelism,
                output_dir: None,
                wall_ms,
                fps: if wall_ms > 0.0 { n as f64 / (wall_ms / 1e3) } else { 0.0 },
                stages: stage_stats(&ok_timings),
                per_image: per_image_timing,
            }),
        })
    }
}

/// Loads the manifest (evaluation records only), runs, and writes the
/// report to the output directory if one is set.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunReport> {
    let mut pipeline = Pipeline::from_config(cfg)?;
    let manifest = load_manifest(&cfg.manifest, LoadMode::Evaluation)?;
    if cfg.idf {
        pipeline.idf = Some(IdfTable::from_texts(
            manifest
                .records
                .iter()
                .flat_map(|r| r.rationales.values().map(String::as_str)),
        ));
    }
    let mut report = pipeline.run(&manifest.records, &cfg.images_dir())?;
    if let Some(dir) = &cfg.output_dir {
        if let Some(t) = report.timing.as_mut() {
            t.output_dir = Some(dir.clone());
        }
        report.save(dir)?;
    }
    Ok(report)
}

/// Scores of saved model responses against a manifest, with no VLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardEvalReport {
    pub report_version: u32,
    pub strict_parse: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<String>,
    pub idf: bool,
    pub per_image: Vec<ImageResult>,
    pub corpus: CorpusMetrics,
}

impl HazardEvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn error_count(&self) -> usize {
        self.per_image.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn to_table(&self) -> String {
        self.corpus.to_table()
    }
}

/// Where `eval-hazards` looks for the response to `image_ref`.
pub fn response_path(dir: &Path, image_ref: &str) -> PathBuf {
    dir.join(image_ref).with_extension("txt")
}

/// Parses `<responses>/<image_ref>.txt` for every record and scores it. A
/// missing or unreadable response is a per-image error.
pub fn evaluate_responses(
    records: &[HazardRecord],
    responses: &Path,
    parser: &Parser,
    embedder: Option<&dyn EmbeddingProvider>,
    idf: Option<&IdfTable>,
) -> HazardEvalReport {
    let per_image: Vec<ImageResult> = records
        .iter()
        .map(|r| {
            let mut result = Pipeline::blank_result(r);
            let path = response_path(responses, &r.image);
            match std::fs::read_to_string(&path) {
                Ok(text) => {
                    let a = parser.parse(&text);
                    result.counts = Some(multilabel_counts(&a.categories, &r.hazards));
                    result.rationale = embedder.map(|e| score_rationales(&a, r, e, idf));
                    result.assessment = Some((&a).into());
                    result.response = Some(text);
                }
                Err(e) => result.error = Some(Error::io(format!("reading response {}", path.display()), e).to_string()),
            }
            result
        })
        .collect();
    HazardEvalReport {
        report_version: REPORT_VERSION,
        strict_parse: parser.is_strict(),
        embedder: embedder.map(|e| e.id().to_string()),
        idf: idf.is_some(),
        corpus: CorpusMetrics::from_images(&per_image),
        per_image,
    }
}
