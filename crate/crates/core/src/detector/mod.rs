//! Detector backends: embedded ONNX inference, precomputed detection files,
//! or an HTTP detection service.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::detection::{filter_detections, ClassList, Detection, DetectionFile, DEFAULT_SCORE_THRESHOLD};
use crate::error::{Error, Result};

mod decode;
#[cfg(feature = "embedded")]
mod embedded;
mod letterbox;

pub use decode::{decode_output, OutputHead};
#[cfg(feature = "embedded")]
pub use embedded::EmbeddedDetector;
pub use letterbox::{letterbox_transform, Letterbox, PAD_VALUE};

pub const DEFAULT_INPUT_SIZE: u32 = 640;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum DetectorSource {
    EmbeddedModel { model_path: PathBuf },
    Files { files_dir: PathBuf },
    Http { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(flatten)]
    pub source: DetectorSource,
    pub input_size: u32,
    pub score_threshold: f64,
    /// Model class id to taxonomy class; ids mapped to `None` are dropped.
    #[serde(skip)]
    pub class_list: ClassList,
}

impl DetectorConfig {
    pub fn new(source: DetectorSource) -> Self {
        Self {
            source,
            input_size: DEFAULT_INPUT_SIZE,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
            class_list: ClassList::default(),
        }
    }

    pub fn files(dir: impl Into<PathBuf>) -> Self {
        Self::new(DetectorSource::Files { files_dir: dir.into() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("detector input_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config("detector score_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimedDetections {
    pub detections: Vec<Detection>,
    pub detect_latency: Duration,
}

pub trait Detector: Send + Sync {
    fn id(&self) -> &str;

    /// Detections for one image, in normalized original-image coordinates,
    /// already filtered by the score threshold.
    fn detect(&self, image_ref: &str, image: &[u8]) -> Result<Vec<Detection>>;
}

/// Runs `detector` with a timer around the backend call only.
pub fn detect(detector: &dyn Detector, image_ref: &str, image: &[u8]) -> Result<TimedDetections> {
    let start = Instant::now();
    let detections = detector.detect(image_ref, image)?;
    Ok(TimedDetections {
        detections,
        detect_latency: start.elapsed(),
    })
}

pub fn build_detector(cfg: &DetectorConfig) -> Result<Box<dyn Detector>> {
    cfg.validate()?;
    Ok(match &cfg.source {
        DetectorSource::Files { files_dir } => Box::new(FilesDetector::new(files_dir, cfg.score_threshold)),
        DetectorSource::Http { endpoint } => Box::new(HttpDetector::new(
            endpoint,
            cfg.score_threshold,
            Duration::from_secs(30),
        )?),
        #[cfg(feature = "embedded")]
        DetectorSource::EmbeddedModel { model_path } => Box::new(EmbeddedDetector::load(
            model_path,
            cfg.input_size,
            cfg.class_list.clone(),
            cfg.score_threshold,
        )?),
        #[cfg(not(feature = "embedded"))]
        DetectorSource::EmbeddedModel { .. } => {
            return Err(Error::Config("built without the `embedded` feature".into()))
        }
    })
}

/// Reads `<dir>/<image_ref with a .json extension>`.
#[derive(Debug, Clone)]
pub struct FilesDetector {
    dir: PathBuf,
    threshold: f64,
}

impl FilesDetector {
    pub fn new(dir: impl AsRef<Path>, threshold: f64) -> Self {
        Self {
            dir: dir.as_ref().to_path_buf(),
            threshold,
        }
    }

    pub fn path_for(&self, image_ref: &str) -> PathBuf {
        self.dir.join(image_ref).with_extension("json")
    }
}

impl Detector for FilesDetector {
    fn id(&self) -> &str {
        "files"
    }

    fn detect(&self, image_ref: &str, _image: &[u8]) -> Result<Vec<Detection>> {
        let path = self.path_for(image_ref);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::DetectionFileMissing(path)),
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        let file = DetectionFile::from_json(&text)?;
        Ok(filter_detections(&file.detections, self.threshold))
    }
}

/// POSTs `{"image": <base64>}` and expects a detection-file document back.
pub struct HttpDetector {
    client: reqwest::blocking::Client,
    endpoint: String,
    threshold: f64,
}

impl HttpDetector {
    pub fn new(endpoint: impl Into<String>, threshold: f64, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("building HTTP client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            threshold,
        })
    }
}

impl Detector for HttpDetector {
    fn id(&self) -> &str {
        "http"
    }

    fn detect(&self, image_ref: &str, image: &[u8]) -> Result<Vec<Detection>> {
        let body = serde_json::json!({
            "image_ref": image_ref,
            "image": base64::engine::general_purpose::STANDARD.encode(image),
        });
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| Error::DetectorEndpoint(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::DetectorEndpoint(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::DetectorEndpoint(format!("HTTP {status}")));
        }
        let file = DetectionFile::from_json(&text).map_err(|e| Error::DetectorEndpoint(e.to_string()))?;
        Ok(filter_detections(&file.detections, self.threshold))
    }
}

/// Fixed detections for every image; a stand-in for tests and examples.
#[derive(Debug, Clone, Default)]
pub struct StaticDetector(pub Vec<Detection>);

impl Detector for StaticDetector {
    fn id(&self) -> &str {
        "static"
    }

    fn detect(&self, _image_ref: &str, _image: &[u8]) -> Result<Vec<Detection>> {
        Ok(self.0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{BoundingBox, ObjectClass};

    #[test]
    fn files_backend_passthrough_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let d = |cx, score| {
            Detection::new(BoundingBox::new(cx, 0.5, 0.1, 0.2).unwrap(), ObjectClass::Worker, score).unwrap()
        };
        let file = DetectionFile {
            image: "site/a.jpg".into(),
            detections: vec![d(0.3, 0.9), d(0.6, 0.8), d(0.7, 0.1)],
        };
        std::fs::create_dir_all(dir.path().join("site")).unwrap();
        std::fs::write(dir.path().join("site/a.json"), serde_json::to_string(&file).unwrap()).unwrap();

        let det = build_detector(&DetectorConfig::files(dir.path())).unwrap();
        let out = detect(det.as_ref(), "site/a.jpg", b"").unwrap();
        assert_eq!(out.detections, file.detections[..2].to_vec());

        let err = det.detect("site/missing.jpg", b"").unwrap_err();
        assert!(matches!(err, Error::DetectionFileMissing(_)));
    }

    #[test]
    fn config_validation() {
        let mut cfg = DetectorConfig::files("x");
        cfg.input_size = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = DetectorConfig::files("x");
        cfg.score_threshold = 1.5;
        assert!(build_detector(&cfg).is_err());
    }
}
