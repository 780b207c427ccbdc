//! Parsing free-form model output into hazard assessments.
//!
//! The expected layout is
//!
//! ```text
//! Hazards: caught_between_hazard, fall_hazard
//! Explanation:
//! -caught_between_hazard: The worker w1 is walking close to an excavator ex1.
//! -fall_hazard: ...
//! ```
//!
//! HTML-ish wrappers are stripped first, labels go through
//! [`SynonymTable::canonicalize`], and the parser never fails: text without
//! a `Hazards:` header yields an empty assessment with a warning.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Serialize, Serializer};

use crate::category::HazardKind;
use crate::error::{Error, Result};

const DEFAULT_SYNONYMS: &str = include_str!("../assets/synonyms.v1.txt");

const NONE_LABELS: &[&str] = &[
    "none",
    "no",
    "n/a",
    "na",
    "nil",
    "no_hazard",
    "no_hazards",
    "no_hazards_detected",
    "no_hazards_identified",
    "no_hazards_found",
    "none_detected",
    "none_identified",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseWarning {
    MissingHeader,
    EmptyLabelList,
    UnknownLabel(String),
    RationaleOnlyLabel(HazardKind),
    UnknownRationaleLabel(String),
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::MissingHeader => f.write_str("missing_header"),
            ParseWarning::EmptyLabelList => f.write_str("empty_label_list"),
            ParseWarning::UnknownLabel(l) => write!(f, "unknown_label: {l}"),
            ParseWarning::RationaleOnlyLabel(k) => write!(f, "rationale_only_label: {k}"),
            ParseWarning::UnknownRationaleLabel(l) => write!(f, "unknown_rationale_label: {l}"),
        }
    }
}

impl Serialize for ParseWarning {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Structured hazard assessment.
///
/// Invariant: every rationale key is also in `categories`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HazardAssessment {
    pub categories: BTreeSet<HazardKind>,
    pub rationales: BTreeMap<HazardKind, String>,
    pub parse_warnings: Vec<ParseWarning>,
}

impl HazardAssessment {
    /// Renders back into the canonical `Hazards:` / `Explanation:` layout.
    pub fn render(&self) -> String {
        if self.categories.is_empty() {
            return "Hazards: none".to_string();
        }
        let labels: Vec<&str> = self.categories.iter().map(|k| k.key()).collect();
        let mut out = format!("Hazards: {}\nExplanation:", labels.join(", "));
        for (k, text) in &self.rationales {
            out.push_str(&format!("\n-{}: {}", k.key(), text));
        }
        out
    }

    /// Rationales joined in canonical key order, or `None` if there are none.
    pub fn rationale_text(&self) -> Option<String> {
        join_rationales(&self.rationales)
    }
}

pub(crate) fn join_rationales(rationales: &BTreeMap<HazardKind, String>) -> Option<String> {
    let parts: Vec<&str> = rationales
        .values()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect();
    (!parts.is_empty()).then(|| parts.join(" "))
}

/// Maps loose surface labels onto canonical hazard keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynonymTable {
    entries: HashMap<String, HazardKind>,
}

impl SynonymTable {
    pub fn empty() -> Self {
        Self {
            entries: HashMap::new(),
        }
    }

    /// Parses `surface => canonical_key` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, key) = line
                .split_once("=>")
                .ok_or_else(|| Error::Config(format!("synonym line {}: expected `surface => key`", n + 1)))?;
            let kind = HazardKind::from_key(key.trim())
                .ok_or_else(|| Error::Config(format!("synonym line {}: unknown key `{}`", n + 1, key.trim())))?;
            entries.insert(normalize_label(surface), kind);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading synonyms {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn canonicalize(&self, label: &str) -> Option<HazardKind> {
        let norm = normalize_label(label);
        HazardKind::from_key(&norm).or_else(|| self.entries.get(&norm).copied())
    }
}

impl Default for SynonymTable {
    fn default() -> Self {
        Self::parse(DEFAULT_SYNONYMS).expect("bundled synonym table is valid")
    }
}

/// Lowercase, trim, strip wrapping quotes/markup and trailing punctuation,
/// and fold spaces and hyphens into single underscores.
pub fn normalize_label(s: &str) -> String {
    let lowered = s.trim().to_lowercase();
    let stripped = lowered
        .trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '`' | '"' | '\'' | '[' | ']' | '(' | ')' | '_'))
        .trim_end_matches(|c: char| matches!(c, '.' | ',' | ';' | ':' | '!' | '?') || c.is_whitespace());
    let stripped = stripped.trim_matches(|c: char| matches!(c, '*' | '`' | '"' | '\''));
    let mut out = String::with_capacity(stripped.len());
    for c in stripped.chars() {
        let c = if c.is_whitespace() || c == '-' { '_' } else { c };
        if c == '_' && (out.is_empty() || out.ends_with('_')) {
            continue;
        }
        out.push(c);
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

fn default_synonyms() -> &'static SynonymTable {
    static TABLE: OnceLock<SynonymTable> = OnceLock::new();
    TABLE.get_or_init(SynonymTable::default)
}

/// Canonicalizes a label with the bundled synonym table.
pub fn canonicalize_label(s: &str) -> Option<HazardKind> {
    default_synonyms().canonicalize(s)
}

/// Response parser. `strict` disables the synonym table and the recovery of
/// labels that appear only in explanation bullets.
#[derive(Debug, Clone)]
pub struct Parser {
    synonyms: SynonymTable,
    strict: bool,
}

impl Default for Parser {
    fn default() -> Self {
        Self::new(SynonymTable::default(), false)
    }
}

struct Patterns {
    tag: Regex,
    header: Regex,
    explanation: Regex,
    bullet: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        tag: Regex::new(r"<[^<>]*>").unwrap(),
        header: Regex::new(r"(?i)\bhazards?\s*\**\s*:\s*\**").unwrap(),
        explanation: Regex::new(r"(?i)\bexplanations?\s*\**\s*:\s*\**").unwrap(),
        bullet: Regex::new(r"(?m)(?:^|[ \t])[-*•][ \t]*\**[ \t]*([A-Za-z][A-Za-z0-9 _\-]{0,60}?)[ \t]*\**[ \t]*:")
            .unwrap(),
    })
}

fn strip_markup(raw: &str) -> String {
    let text = patterns().tag.replace_all(raw, "\n");
    text.replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&")
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Parser {
    pub fn new(synonyms: SynonymTable, strict: bool) -> Self {
        Self { synonyms, strict }
    }

    pub fn strict() -> Self {
        Self::new(SynonymTable::empty(), true)
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn canonicalize(&self, label: &str) -> Option<HazardKind> {
        if self.strict {
            HazardKind::from_key(&normalize_label(label))
        } else {
            self.synonyms.canonicalize(label)
        }
    }

    pub fn parse(&self, raw: &str) -> HazardAssessment {
        let p = patterns();
        let text = strip_markup(raw);
        let mut out = HazardAssessment::default();

        let Some(header) = p.header.find(&text) else {
            out.parse_warnings.push(ParseWarning::MissingHeader);
            return out;
        };
        let after = &text[header.end()..];

        // The label list runs to the end of the line, the Explanation marker
        // or the first bullet, whichever comes first.
        let mut list_end = after.find('\n').unwrap_or(after.len());
        if let Some(m) = p.explanation.find(after) {
            list_end = list_end.min(m.start());
        }
        if let Some(c) = p.bullet.captures(after) {
            list_end = list_end.min(c.get(0).unwrap().start());
        }
        let list = &after[..list_end];
        self.parse_label_list(list, &mut out);

        let rest = &after[list_end..];
        let body = match p.explanation.find(rest) {
            Some(m) => &rest[m.end()..],
            None => rest,
        };
        self.parse_rationales(body, &mut out);
        out
    }

    fn parse_label_list(&self, list: &str, out: &mut HazardAssessment) {
        let normalized = normalize_label(list);
        if normalized.is_empty() {
            out.parse_warnings.push(ParseWarning::EmptyLabelList);
            return;
        }
        if NONE_LABELS.contains(&normalized.as_str()) {
            return;
        }
        for piece in list
            .split([',', ';', '|', '/'])
            .flat_map(|s| s.split(" and "))
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            match self.canonicalize(piece) {
                Some(kind) => {
                    out.categories.insert(kind);
                }
                None if NONE_LABELS.contains(&normalize_label(piece).as_str()) => {}
                None => out.parse_warnings.push(ParseWarning::UnknownLabel(piece.to_string())),
            }
        }
    }

    fn parse_rationales(&self, body: &str, out: &mut HazardAssessment) {
        struct Boundary {
            start: usize,
            end: usize,
            kind: Result<HazardKind, String>,
        }
        let mut boundaries = Vec::new();
        for c in patterns().bullet.captures_iter(body) {
            let whole = c.get(0).unwrap();
            let label = c.get(1).unwrap().as_str();
            let at_line_start = body[..whole.start()]
                .rsplit('\n')
                .next()
                .is_some_and(|prefix| prefix.trim().is_empty())
                || whole.as_str().starts_with(['-', '*', '•']);
            match self.canonicalize(label) {
                Some(kind) => boundaries.push(Boundary {
                    start: whole.start(),
                    end: whole.end(),
                    kind: Ok(kind),
                }),
                None if at_line_start => boundaries.push(Boundary {
                    start: whole.start(),
                    end: whole.end(),
                    kind: Err(label.trim().to_string()),
                }),
                None => {}
            }
        }

        for (i, b) in boundaries.iter().enumerate() {
            let stop = boundaries.get(i + 1).map_or(body.len(), |n| n.start);
            let text = collapse_ws(&body[b.end..stop]);
            match &b.kind {
                Err(label) => out
                    .parse_warnings
                    .push(ParseWarning::UnknownRationaleLabel(label.clone())),
                Ok(_) if text.is_empty() => {}
                Ok(kind) => {
                    if !out.categories.contains(kind) {
                        if self.strict {
                            out.parse_warnings
                                .push(ParseWarning::UnknownRationaleLabel(kind.key().to_string()));
                            continue;
                        }
                        out.categories.insert(*kind);
                        out.parse_warnings.push(ParseWarning::RationaleOnlyLabel(*kind));
                    }
                    out.rationales
                        .entry(*kind)
                        .and_modify(|r| {
                            r.push(' ');
                            r.push_str(&text);
                        })
                        .or_insert(text);
                }
            }
        }
    }
}

/// Parses with the bundled synonym table in lenient mode.
pub fn parse_assessment(raw: &str) -> HazardAssessment {
    static PARSER: OnceLock<Parser> = OnceLock::new();
    PARSER.get_or_init(Parser::default).parse(raw)
}

/// Known identifiers that occur as standalone tokens in `rationale`.
pub fn extract_entity_mentions(rationale: &str, known_ids: &BTreeSet<String>) -> BTreeSet<String> {
    rationale
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|tok| known_ids.contains(*tok))
        .map(str::to_string)
        .collect()
}
