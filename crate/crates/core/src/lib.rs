//! Detection-guided hazard assessment for construction-site images.
//!
//! A detector finds workers and machinery, the detections are written into
//! a prompt for a small vision-language model, and the model's free-text
//! answer is parsed into hazard categories with rationales. The crate also
//! carries the evaluation side: detector mAP, hazard P/R/F1, BERTScore over
//! rationales, dataset manifests and replayable runs.

pub mod category;
pub mod dataset;
pub mod detection;
pub mod detection_metrics;
pub mod detector;
pub mod error;
pub mod hazard_metrics;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod vlm;

pub use category::{CategorySet, HazardCategory, HazardKind};
pub use detection::{
    assign_identifiers, filter_detections, iou, normalize_box, BoundingBox, ClassList, Detection, DetectionFile,
    GroundTruth, IdentifiedDetection, ObjectClass,
};
pub use error::{Error, Result};
pub use parser::{parse_assessment, HazardAssessment, Parser};
pub use prompt::{build_prompt, PromptBundle, PromptMode, PromptTemplate};
