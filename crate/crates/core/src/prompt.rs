//! Rendering detections and hazard definitions into model prompts.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::category::CategorySet;
use crate::detection::{IdentifiedDetection, ObjectClass};
use crate::error::{Error, Result};

pub const ENTITIES: &str = "{ENTITIES}";
pub const CATEGORIES: &str = "{CATEGORIES}";
pub const OUTPUT_FORMAT: &str = "{OUTPUT_FORMAT}";

/// Sentence used in place of the entity list when nothing was detected.
pub const NO_ENTITIES: &str = "No workers or machinery detected.";

const BASELINE_V1: &str = include_str!("../assets/baseline.v1.txt");
const GUIDED_V1: &str = include_str!("../assets/guided.v1.txt");
const ANNOTATION_V1: &str = include_str!("../assets/annotation.v1.txt");

const OUTPUT_FORMAT_TEXT: &str = "\
Respond using exactly this format and nothing else:
Hazards: <comma-separated hazard category keys, or none>
Explanation:
-<hazard category key>: <one or two sentences describing the hazard>
Write one explanation line for every hazard you list.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Baseline,
    DetectionGuided,
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::Baseline => "baseline",
            PromptMode::DetectionGuided => "detection_guided",
        })
    }
}

impl std::str::FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(PromptMode::Baseline),
            "guided" | "detection_guided" | "detection-guided" => Ok(PromptMode::DetectionGuided),
            other => Err(Error::Config(format!("unknown prompt mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub version: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(version: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            version: version.into(),
            body: body.into(),
        }
    }

    pub fn baseline_v1() -> Self {
        Self::new("baseline.v1", BASELINE_V1)
    }

    pub fn guided_v1() -> Self {
        Self::new("guided.v1", GUIDED_V1)
    }

    pub fn annotation_v1() -> Self {
        Self::new("annotation.v1", ANNOTATION_V1)
    }

    pub fn default_for(mode: PromptMode) -> Self {
        match mode {
            PromptMode::Baseline => Self::baseline_v1(),
            PromptMode::DetectionGuided => Self::guided_v1(),
        }
    }

    /// Loads a template; the version is the file name without `.txt`
    /// (`guided.v2.txt` becomes `guided.v2`).
    pub fn load(path: &Path) -> Result<Self> {
        let body =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading template {}", path.display()), e))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("custom");
        let version = name.strip_suffix(".txt").unwrap_or(name);
        Ok(Self::new(version, body))
    }

    /// Checks that the placeholders suit the given mode.
    pub fn check(&self, mode: PromptMode) -> Result<()> {
        let count = |p: &str| self.body.matches(p).count();
        for p in [CATEGORIES, OUTPUT_FORMAT] {
            if count(p) != 1 {
                return Err(Error::Config(format!(
                    "template {} must contain {p} exactly once",
                    self.version
                )));
            }
        }
        match (mode, count(ENTITIES)) {
            (PromptMode::DetectionGuided, 1) | (PromptMode::Baseline, 0) => Ok(()),
            (PromptMode::DetectionGuided, _) => Err(Error::Config(format!(
                "detection-guided template {} must contain {ENTITIES} exactly once",
                self.version
            ))),
            (PromptMode::Baseline, _) => Err(Error::Config(format!(
                "baseline template {} must not contain {ENTITIES}",
                self.version
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub mode: PromptMode,
    pub text: String,
    pub template_version: String,
    pub entity_count: usize,
}

/// Renders identified detections as `Worker w1: center=0.558,0.518, w2: ...`
/// clauses, one group per class, groups separated by `; `.
pub fn encode_detections(ids: &[IdentifiedDetection]) -> String {
    if ids.is_empty() {
        return NO_ENTITIES.to_string();
    }
    let mut groups: Vec<(ObjectClass, Vec<&IdentifiedDetection>)> = Vec::new();
    for item in ids {
        match groups.iter_mut().find(|(c, _)| *c == item.detection.class) {
            Some((_, members)) => members.push(item),
            None => groups.push((item.detection.class, vec![item])),
        }
    }
    groups.sort_by_key(|(c, _)| *c);

    let mut out = String::new();
    for (gi, (class, members)) in groups.iter().enumerate() {
        if gi > 0 {
            out.push_str("; ");
        }
        out.push_str(class.name());
        out.push(' ');
        for (mi, m) in members.iter().enumerate() {
            if mi > 0 {
                out.push_str(", ");
            }
            let _ = write!(
                out,
                "{}: center={:.3},{:.3}",
                m.id,
                m.detection.bbox.cx(),
                m.detection.bbox.cy()
            );
        }
    }
    out
}

/// `- key: definition` lines in canonical key order.
pub fn render_categories(categories: &CategorySet) -> String {
    categories
        .iter()
        .map(|c| format!("- {}: {}", c.kind.key(), c.definition))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The response-format instruction substituted for `{OUTPUT_FORMAT}`.
pub fn output_format_instruction() -> &'static str {
    OUTPUT_FORMAT_TEXT
}

pub fn build_prompt(
    mode: PromptMode,
    ids: &[IdentifiedDetection],
    categories: &CategorySet,
    template: &PromptTemplate,
) -> Result<PromptBundle> {
    let entities = match mode {
        PromptMode::Baseline => String::new(),
        PromptMode::DetectionGuided => encode_detections(ids),
    };
    render_prompt(mode, &entities, ids.len(), categories, template)
}

/// Fills a template with already-encoded entity text. Baseline prompts
/// ignore `entities`.
pub fn render_prompt(
    mode: PromptMode,
    entities: &str,
    entity_count: usize,
    categories: &CategorySet,
    template: &PromptTemplate,
) -> Result<PromptBundle> {
    template.check(mode)?;
    let mut text = template
        .body
        .replace(CATEGORIES, &render_categories(categories))
        .replace(OUTPUT_FORMAT, OUTPUT_FORMAT_TEXT);
    let entity_count = match mode {
        PromptMode::Baseline => 0,
        PromptMode::DetectionGuided => {
            text = text.replace(ENTITIES, entities);
            entity_count
        }
    };
    Ok(PromptBundle {
        mode,
        text,
        template_version: template.version.clone(),
        entity_count,
    })
}
