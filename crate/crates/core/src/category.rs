//! The four contextual hazard categories and their definitions.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_DEFINITIONS: &str = include_str!("../assets/categories.v1.txt");

/// Canonical hazard category key. Ordering is the canonical key order used
/// wherever categories are listed or concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HazardKind {
    PpeNonCompliance,
    FallHazard,
    CaughtBetweenHazard,
    UnsafeEnvironment,
}

impl HazardKind {
    pub const ALL: [HazardKind; 4] = [
        HazardKind::PpeNonCompliance,
        HazardKind::FallHazard,
        HazardKind::CaughtBetweenHazard,
        HazardKind::UnsafeEnvironment,
    ];

    pub fn key(self) -> &'static str {
        match self {
            HazardKind::PpeNonCompliance => "ppe_non_compliance",
            HazardKind::FallHazard => "fall_hazard",
            HazardKind::CaughtBetweenHazard => "caught_between_hazard",
            HazardKind::UnsafeEnvironment => "unsafe_environment",
        }
    }

    /// Exact key lookup; use the parser's canonicalizer for loose matching.
    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == key)
    }
}

impl fmt::Display for HazardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for HazardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_key(s.trim()).ok_or_else(|| Error::InvalidArgument(format!("unknown hazard category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HazardCategory {
    pub kind: HazardKind,
    pub definition: String,
}

/// Exactly one definition for each of the four categories, in key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategorySet(Vec<HazardCategory>);

impl CategorySet {
    /// Parses `key: definition` lines. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut found: Vec<HazardCategory> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, definition) = line
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("category line {}: expected `key: definition`", n + 1)))?;
            let kind = HazardKind::from_key(key.trim())
                .ok_or_else(|| Error::Config(format!("category line {}: unknown key `{}`", n + 1, key.trim())))?;
            let definition = definition.trim();
            if definition.is_empty() {
                return Err(Error::Config(format!(
                    "category line {}: empty definition for {kind}",
                    n + 1
                )));
            }
            if found.iter().any(|c| c.kind == kind) {
                return Err(Error::Config(format!("category {kind} defined twice")));
            }
            found.push(HazardCategory {
                kind,
                definition: definition.to_string(),
            });
        }
        if let Some(missing) = HazardKind::ALL
            .into_iter()
            .find(|k| !found.iter().any(|c| c.kind == *k))
        {
            return Err(Error::Config(format!("category {missing} has no definition")));
        }
        found.sort_by_key(|c| c.kind);
        Ok(Self(found))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading categories {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn iter(&self) -> impl Iterator<Item = &HazardCategory> {
        self.0.iter()
    }

    pub fn definition(&self, kind: HazardKind) -> &str {
        self.0
            .iter()
            .find(|c| c.kind == kind)
            .map(|c| c.definition.as_str())
            .unwrap_or_default()
    }
}

impl Default for CategorySet {
    fn default() -> Self {
        Self::parse(DEFAULT_DEFINITIONS).expect("bundled category definitions are valid")
    }
}
