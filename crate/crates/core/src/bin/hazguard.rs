//! `hazguard` command line: runs, benchmarks, report comparison, metric
//! evaluation and the annotation workflow.
//!
//! Exit codes: 0 success, 1 configuration or fatal error, 2 finished with
//! per-image errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser as ClapParser, Subcommand};
use serde::Deserialize;

use hazguard::category::CategorySet;
use hazguard::dataset::{
    generate_annotation_draft, list_images, load_manifest, LoadMode, Manifest, RecordEdits, Validation,
};
use hazguard::detection::{parse_label_file, ClassList, DetectionFile};
use hazguard::detection_metrics::{evaluate_detections, ImageDetections, MAP_THRESHOLDS};
use hazguard::detector::{DetectorConfig, DetectorSource};
use hazguard::hazard_metrics::IdfTable;
use hazguard::parser::SynonymTable;
use hazguard::pipeline::{
    bench, build_embedder, compare_reports, evaluate_responses, BackendKind, BenchOptions, Pipeline, RunConfig,
    RunReport,
};
use hazguard::vlm::{InferenceConfig, LiveBackend, RecordingBackend, ReplayBackend, VlmBackend};
use hazguard::{HazardKind, Parser, PromptMode, PromptTemplate};

#[derive(ClapParser)]
#[command(
    name = "hazguard",
    version,
    about = "Detection-guided hazard assessment runs and evaluation"
)]
struct Cli {
    /// TOML file with defaults for any flag; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one prompt mode over a manifest and write a report.
    Run(RunArgs),
    /// Time baseline and guided runs on the same images.
    Bench(BenchArgs),
    /// Baseline vs proposed deltas from two reports (files or output dirs).
    Compare {
        baseline: PathBuf,
        proposed: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Per-class AP and mAP for detection files against YOLO label files.
    EvalDetections(EvalDetArgs),
    /// Hazard P/R/F1 and BERTScore for saved model responses.
    EvalHazards(EvalHazArgs),
    /// Generate draft records for images not yet in a manifest.
    Annotate(AnnotateArgs),
    /// Record an annotator verdict on one manifest record.
    Validate(ValidateArgs),
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Base directory for image references (default: the manifest's directory).
    #[arg(long)]
    images: Option<PathBuf>,
    /// embedded | files | http
    #[arg(long)]
    detector: Option<String>,
    /// ONNX model for the embedded detector.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    detector_endpoint: Option<String>,
    /// Class names, one per line; line index is the model class id.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    input_size: Option<u32>,
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Chat completions base URL (else HAZGUARD_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    timeout_secs: Option<u64>,
    #[arg(long)]
    max_retries: Option<u32>,
    /// live | replay
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long)]
    strict_parse: bool,
    /// `hashing`, an embeddings cache file, or an http(s) endpoint.
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    idf: bool,
    #[arg(long)]
    parallel: Option<usize>,
    /// Also run and time the detector in baseline mode.
    #[arg(long)]
    time_detector: bool,
}

#[derive(Args)]
struct RunArgs {
    /// baseline | guided
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Template for the baseline pipeline; `--template` is used for guided.
    #[arg(long)]
    baseline_template: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvalDetArgs {
    /// Detection JSON files, one per image.
    #[arg(long)]
    preds: Option<PathBuf>,
    /// `<class> <cx> <cy> <w> <h>` label files, one per image.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Comma-separated IoU thresholds.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalHazArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// `<image_ref>.txt` response files.
    #[arg(long)]
    responses: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<String>,
    #[arg(long)]
    idf: bool,
    #[arg(long)]
    strict_parse: bool,
    #[arg(long)]
    synonyms: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    images: Option<PathBuf>,
    /// Manifest to create or extend.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    transcripts: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    synonyms: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    record: String,
    /// validated | revised | rejected
    #[arg(long)]
    verdict: String,
    #[arg(long)]
    annotator: String,
    /// Replacement hazard keys, comma-separated.
    #[arg(long, value_delimiter = ',')]
    set_hazards: Option<Vec<String>>,
    /// `key=text`, repeatable.
    #[arg(long)]
    rationale: Vec<String>,
}

/// Config file keys, named after the long flags with underscores.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    mode: Option<String>,
    manifest: Option<PathBuf>,
    images: Option<PathBuf>,
    detector: Option<String>,
    model: Option<PathBuf>,
    detections: Option<PathBuf>,
    detector_endpoint: Option<String>,
    classes: Option<PathBuf>,
    input_size: Option<u32>,
    score_threshold: Option<f64>,
    endpoint: Option<String>,
    model_name: Option<String>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    backend: Option<String>,
    transcripts: Option<PathBuf>,
    template: Option<PathBuf>,
    baseline_template: Option<PathBuf>,
    categories: Option<PathBuf>,
    synonyms: Option<PathBuf>,
    strict_parse: Option<bool>,
    embeddings: Option<String>,
    idf: Option<bool>,
    parallel: Option<usize>,
    time_detector: Option<bool>,
    out: Option<PathBuf>,
    repeats: Option<usize>,
    warmup: Option<usize>,
    preds: Option<PathBuf>,
    labels: Option<PathBuf>,
    alphas: Option<Vec<f64>>,
    responses: Option<PathBuf>,
}

impl FileConfig {
    fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

// Our error variants already embed their source in the message, so skip
// causes that the previous layer printed.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

enum Failure {
    Config(anyhow::Error),
    PerImage(usize),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn per_image(errors: usize) -> Outcome {
    if errors > 0 {
        Err(Failure::PerImage(errors))
    } else {
        Ok(())
    }
}

fn required<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| anyhow!("--{flag} is required"))
}

fn merge_common(c: Common, f: &FileConfig) -> Common {
    Common {
        manifest: c.manifest.or(f.manifest.clone()),
        images: c.images.or(f.images.clone()),
        detector: c.detector.or(f.detector.clone()),
        model: c.model.or(f.model.clone()),
        detections: c.detections.or(f.detections.clone()),
        detector_endpoint: c.detector_endpoint.or(f.detector_endpoint.clone()),
        classes: c.classes.or(f.classes.clone()),
        input_size: c.input_size.or(f.input_size),
        score_threshold: c.score_threshold.or(f.score_threshold),
        endpoint: c.endpoint.or(f.endpoint.clone()),
        model_name: c.model_name.or(f.model_name.clone()),
        temperature: c.temperature.or(f.temperature),
        max_tokens: c.max_tokens.or(f.max_tokens),
        timeout_secs: c.timeout_secs.or(f.timeout_secs),
        max_retries: c.max_retries.or(f.max_retries),
        backend: c.backend.or(f.backend.clone()),
        transcripts: c.transcripts.or(f.transcripts.clone()),
        template: c.template.or(f.template.clone()),
        categories: c.categories.or(f.categories.clone()),
        synonyms: c.synonyms.or(f.synonyms.clone()),
        strict_parse: c.strict_parse || f.strict_parse.unwrap_or(false),
        embeddings: c.embeddings.or(f.embeddings.clone()),
        idf: c.idf || f.idf.unwrap_or(false),
        parallel: c.parallel.or(f.parallel),
        time_detector: c.time_detector || f.time_detector.unwrap_or(false),
    }
}

fn inference(c: &Common, base: InferenceConfig) -> InferenceConfig {
    let mut cfg = base;
    if let Some(e) = &c.endpoint {
        cfg.endpoint = e.clone();
    }
    if let Some(t) = c.temperature {
        cfg.temperature = t;
    }
    if let Some(m) = c.max_tokens {
        cfg.max_tokens = m;
    }
    if let Some(s) = c.timeout_secs {
        cfg.timeout = Duration::from_secs(s);
    }
    if let Some(r) = c.max_retries {
        cfg.max_retries = r;
    }
    cfg
}

fn detector_config(c: &Common) -> anyhow::Result<Option<DetectorConfig>> {
    let source = match c.detector.as_deref() {
        None => return Ok(None),
        Some("embedded") => DetectorSource::EmbeddedModel {
            model_path: required(c.model.clone(), "model")?,
        },
        Some("files") => DetectorSource::Files {
            files_dir: required(c.detections.clone(), "detections")?,
        },
        Some("http") => DetectorSource::Http {
            endpoint: required(c.detector_endpoint.clone(), "detector-endpoint")?,
        },
        Some(other) => bail!("unknown detector `{other}` (embedded|files|http)"),
    };
    let mut d = DetectorConfig::new(source);
    if let Some(s) = c.input_size {
        d.input_size = s;
    }
    if let Some(t) = c.score_threshold {
        d.score_threshold = t;
    }
    Ok(Some(d))
}

fn run_config(c: &Common, mode: PromptMode) -> anyhow::Result<RunConfig> {
    let model = c.model_name.clone().unwrap_or_else(|| "default".into());
    let mut cfg = RunConfig::new(
        mode,
        required(c.manifest.clone(), "manifest")?,
        inference(c, InferenceConfig::evaluation(model)),
    );
    cfg.images_dir = c.images.clone();
    cfg.detector = detector_config(c)?;
    cfg.class_list = c.classes.clone();
    cfg.backend = c.backend.as_deref().unwrap_or("live").parse()?;
    cfg.transcripts = c.transcripts.clone();
    cfg.template = c.template.clone();
    cfg.categories = c.categories.clone();
    cfg.synonyms = c.synonyms.clone();
    cfg.strict_parse = c.strict_parse;
    cfg.embeddings = c.embeddings.clone();
    cfg.idf = c.idf;
    cfg.parallelism = c.parallel.unwrap_or(1);
    cfg.time_detector_in_baseline = c.time_detector;
    Ok(cfg)
}

fn print_json_or_table(json: bool, as_json: String, table: String) {
    if json {
        println!("{as_json}");
    } else {
        print!("{table}");
    }
}

fn cmd_run(a: RunArgs, f: &FileConfig) -> Outcome {
    let mode: PromptMode = required(a.mode.or(f.mode.clone()), "mode")?.parse()?;
    let mut cfg = run_config(&merge_common(a.common, f), mode)?;
    cfg.output_dir = a.out.or(f.out.clone());
    let report = hazguard::pipeline::run_pipeline(&cfg)?;
    print_json_or_table(a.json, report.to_json(), report.to_table());
    per_image(report.error_count())
}

fn cmd_bench(a: BenchArgs, f: &FileConfig) -> Outcome {
    let c = merge_common(a.common, f);
    let mut gcfg = run_config(&c, PromptMode::DetectionGuided)?;
    gcfg.idf = false;
    let mut bcfg = gcfg.clone();
    bcfg.mode = PromptMode::Baseline;
    bcfg.template = a.baseline_template.or(f.baseline_template.clone());
    let (baseline, guided) = (Pipeline::from_config(&bcfg)?, Pipeline::from_config(&gcfg)?);
    let manifest = load_manifest(&gcfg.manifest, LoadMode::Evaluation)?;
    let opts = BenchOptions {
        repeats: a.repeats.or(f.repeats).unwrap_or(BenchOptions::default().repeats),
        warmup: a.warmup.or(f.warmup).unwrap_or(BenchOptions::default().warmup),
    };
    let report = bench(&baseline, &guided, &manifest.records, &gcfg.images_dir(), opts)?;
    if let Some(dir) = a.out.or(f.out.clone()) {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("bench.json"), report.to_json() + "\n")?;
        std::fs::write(dir.join("bench.txt"), report.to_table())?;
    }
    print_json_or_table(a.json, report.to_json(), report.to_table());
    per_image(report.baseline.errors + report.guided.errors)
}

fn load_report(path: &Path) -> anyhow::Result<RunReport> {
    let path = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    Ok(RunReport::load(&path)?)
}

fn cmd_compare(baseline: &Path, proposed: &Path, json: bool) -> Outcome {
    let c = compare_reports(&load_report(baseline)?, &load_report(proposed)?)?;
    print_json_or_table(json, serde_json::to_string_pretty(&c)?, c.to_table());
    Ok(())
}

fn stems(dir: &Path, ext: &str) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn cmd_eval_detections(a: EvalDetArgs, f: &FileConfig) -> Outcome {
    let preds_dir = required(a.preds.or(f.preds.clone()), "preds")?;
    let labels_dir = required(a.labels.or(f.labels.clone()), "labels")?;
    let classes = match a.classes.or(f.classes.clone()) {
        Some(p) => ClassList::load(&p)?,
        None => ClassList::default(),
    };
    let alphas = a.alphas.or(f.alphas.clone()).unwrap_or_else(|| MAP_THRESHOLDS.to_vec());
    let preds = stems(&preds_dir, "json")?;
    let labels = stems(&labels_dir, "txt")?;
    let names: BTreeSet<&String> = preds.keys().chain(labels.keys()).collect();
    let mut images = Vec::new();
    for name in names {
        let p = match preds.get(name) {
            Some(path) => {
                DetectionFile::from_json(&std::fs::read_to_string(path)?)
                    .with_context(|| path.display().to_string())?
                    .detections
            }
            None => Vec::new(),
        };
        let g = match labels.get(name) {
            Some(path) => parse_label_file(&std::fs::read_to_string(path)?, &classes)
                .with_context(|| path.display().to_string())?,
            None => Vec::new(),
        };
        images.push(ImageDetections {
            image: name.clone(),
            preds: p,
            gts: g,
        });
    }
    let report = evaluate_detections(&images, &alphas)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = a.out.or(f.out.clone()) {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("detections.json"), json.clone() + "\n")?;
        std::fs::write(dir.join("detections.txt"), report.to_table())?;
    }
    print_json_or_table(a.json, json, report.to_table());
    Ok(())
}

fn cmd_eval_hazards(a: EvalHazArgs, f: &FileConfig) -> Outcome {
    let manifest = load_manifest(
        &required(a.manifest.or(f.manifest.clone()), "manifest")?,
        LoadMode::Evaluation,
    )?;
    let responses = required(a.responses.or(f.responses.clone()), "responses")?;
    let synonyms = match a.synonyms.or(f.synonyms.clone()) {
        Some(p) => SynonymTable::load(&p)?,
        None => SynonymTable::default(),
    };
    let parser = Parser::new(synonyms, a.strict_parse || f.strict_parse.unwrap_or(false));
    let embedder = build_embedder(a.embeddings.or(f.embeddings.clone()).as_deref().unwrap_or("hashing"))?;
    let idf = (a.idf || f.idf.unwrap_or(false)).then(|| {
        IdfTable::from_texts(
            manifest
                .records
                .iter()
                .flat_map(|r| r.rationales.values().map(String::as_str)),
        )
    });
    let report = evaluate_responses(
        &manifest.records,
        &responses,
        &parser,
        Some(embedder.as_ref()),
        idf.as_ref(),
    );
    if let Some(dir) = a.out.or(f.out.clone()) {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("hazards.json"), report.to_json() + "\n")?;
        std::fs::write(dir.join("hazards.txt"), report.to_table())?;
    }
    print_json_or_table(a.json, report.to_json(), report.to_table());
    per_image(report.error_count())
}

fn cmd_annotate(a: AnnotateArgs, f: &FileConfig) -> Outcome {
    let images = required(a.images.or(f.images.clone()), "images")?;
    let out = required(a.out.or(f.out.clone()), "out")?;
    let c = Common {
        endpoint: a.endpoint.or(f.endpoint.clone()),
        ..Common::default()
    };
    let cfg = inference(
        &c,
        InferenceConfig::annotation(
            a.model_name
                .or(f.model_name.clone())
                .unwrap_or_else(|| "default".into()),
        ),
    );
    let transcripts = a.transcripts.or(f.transcripts.clone());
    let backend: Box<dyn VlmBackend> = match (
        a.backend.or(f.backend.clone()).as_deref().unwrap_or("live").parse()?,
        transcripts,
    ) {
        (BackendKind::Replay, Some(dir)) => Box::new(ReplayBackend::new(dir)),
        (BackendKind::Replay, None) => return Err(anyhow!("the replay backend needs --transcripts").into()),
        (BackendKind::Live, Some(dir)) => Box::new(RecordingBackend::new(LiveBackend::new(&cfg)?, dir)),
        (BackendKind::Live, None) => Box::new(LiveBackend::new(&cfg)?),
    };
    let template = match a.template.or(f.template.clone()) {
        Some(p) => PromptTemplate::load(&p)?,
        None => PromptTemplate::annotation_v1(),
    };
    let categories = match a.categories.or(f.categories.clone()) {
        Some(p) => CategorySet::load(&p)?,
        None => CategorySet::default(),
    };
    let parser = match a.synonyms.or(f.synonyms.clone()) {
        Some(p) => Parser::new(SynonymTable::load(&p)?, false),
        None => Parser::default(),
    };
    let mut manifest = if out.exists() {
        load_manifest(&out, LoadMode::All)?
    } else {
        Manifest::new(Vec::new())
    };
    let base = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let (mut added, mut failed) = (0, 0);
    for path in list_images(&images)? {
        let image_ref = path
            .strip_prefix(&base)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        if manifest.get(&image_ref).is_some() {
            continue;
        }
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        match generate_annotation_draft(
            &image_ref,
            &bytes,
            backend.as_ref(),
            &cfg,
            &categories,
            &template,
            &parser,
        ) {
            Ok(r) => {
                manifest.upsert(r);
                added += 1;
            }
            Err(e) => {
                log::error!("{image_ref}: {e}");
                failed += 1;
            }
        }
    }
    manifest.save(&out)?;
    println!(
        "{added} drafts added, {failed} failed, {} records in {}",
        manifest.records.len(),
        out.display()
    );
    per_image(failed)
}

fn cmd_validate(a: ValidateArgs, f: &FileConfig) -> Outcome {
    let path = required(a.manifest.or(f.manifest.clone()), "manifest")?;
    let mut manifest = load_manifest(&path, LoadMode::All)?;
    let verdict: Validation = a.verdict.parse()?;
    let key = |s: &str| HazardKind::from_key(s.trim()).ok_or_else(|| anyhow!("unknown hazard category `{s}`"));
    let mut edits = RecordEdits::default();
    if let Some(h) = &a.set_hazards {
        edits.hazards = Some(
            h.iter()
                .filter(|s| !s.trim().is_empty())
                .map(|s| key(s))
                .collect::<anyhow::Result<_>>()?,
        );
    }
    if !a.rationale.is_empty() {
        let mut m = BTreeMap::new();
        for r in &a.rationale {
            let (k, text) = r
                .split_once('=')
                .ok_or_else(|| anyhow!("--rationale expects key=text, got `{r}`"))?;
            m.insert(key(k)?, text.trim().to_string());
        }
        edits.rationales = Some(m);
    }
    let record = manifest.apply_verdict(&a.record, verdict, Some(edits), &a.annotator, chrono::Utc::now())?;
    println!("{}: {:?}", record.image, record.validation);
    manifest.save(&path)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.cmd {
        Cmd::Run(a) => cmd_run(a, &file),
        Cmd::Bench(a) => cmd_bench(a, &file),
        Cmd::Compare {
            baseline,
            proposed,
            json,
        } => cmd_compare(&baseline, &proposed, json),
        Cmd::EvalDetections(a) => cmd_eval_detections(a, &file),
        Cmd::EvalHazards(a) => cmd_eval_hazards(a, &file),
        Cmd::Annotate(a) => cmd_annotate(a, &file),
        Cmd::Validate(a) => cmd_validate(a, &file),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
        Err(Failure::PerImage(n)) => {
            eprintln!("{n} image(s) failed; see the report");
            ExitCode::from(2)
        }
    }
}
