//! Mapping free generated text onto exactly one schema label.
//!
//! The cascade is: exact verbatim match, then canonical-form equality with a
//! single label, then canonical containment (longest canonical label wins,
//! remaining ties go to the earlier label in schema order). Anything else is
//! [`UNPARSEABLE`], which is scored as the schema's negative label.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::dataset::RelationSchema;

pub const UNPARSEABLE: &str = "UNPARSEABLE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Canonical,
    Containment,
    Unparseable,
}

impl MatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchKind::Exact => "exact",
            MatchKind::Canonical => "canonical",
            MatchKind::Containment => "containment",
            MatchKind::Unparseable => "unparseable",
        }
    }
}

impl fmt::Display for MatchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How far down the cascade a raw answer may fall before it is declared
/// unparseable. Unparseable answers always score as the negative label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormalizationPolicy {
    #[default]
    #[serde(rename = "containment-cascade")]
    ContainmentCascade,
    #[serde(rename = "canonical")]
    Canonical,
    #[serde(rename = "exact")]
    Exact,
}

impl NormalizationPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            NormalizationPolicy::ContainmentCascade => "containment-cascade",
            NormalizationPolicy::Canonical => "canonical",
            NormalizationPolicy::Exact => "exact",
        }
    }
}

impl fmt::Display for NormalizationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "containment-cascade" => Ok(NormalizationPolicy::ContainmentCascade),
            "canonical" => Ok(NormalizationPolicy::Canonical),
            "exact" => Ok(NormalizationPolicy::Exact),
            other => Err(format!(
                "unknown normalization policy {other:?} (expected containment-cascade, canonical or exact)"
            )),
        }
    }
}

/// Outcome of normalizing one raw answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    /// A schema label, or [`UNPARSEABLE`].
    pub normalized_label: String,
    pub match_kind: MatchKind,
    /// Always a schema label.
    pub scored_label: String,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub prompt_hash: String,
    pub raw_text: String,
    pub normalized_label: String,
    pub match_kind: MatchKind,
    pub scored_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl PredictionRecord {
    pub fn new(
        instance_id: impl Into<String>,
        prompt_hash: impl Into<String>,
        raw_text: impl Into<String>,
        normalized: Normalized,
    ) -> Self {
        PredictionRecord {
            instance_id: instance_id.into(),
            prompt_hash: prompt_hash.into(),
            raw_text: raw_text.into(),
            normalized_label: normalized.normalized_label,
            match_kind: normalized.match_kind,
            scored_label: normalized.scored_label,
            gold_label: None,
        }
    }

    /// Checks the label/match-kind invariants against `schema`.
    pub fn validate(&self, schema: &RelationSchema) -> Result<(), String> {
        if !schema.contains(&self.scored_label) {
            return Err(format!("{}: scored label {:?} is not in the schema", self.instance_id, self.scored_label));
        }
        let unparseable = self.normalized_label == UNPARSEABLE;
        if !unparseable && !schema.contains(&self.normalized_label) {
            return Err(format!(
                "{}: normalized label {:?} is not in the schema",
                self.instance_id, self.normalized_label
            ));
        }
        if unparseable != (self.match_kind == MatchKind::Unparseable) {
            return Err(format!(
                "{}: match kind {} disagrees with normalized label {:?}",
                self.instance_id, self.match_kind, self.normalized_label
            ));
        }
        Ok(())
    }
}

static DIRECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*(e[12])\s*,\s*(e[12])\s*\)").expect("valid regex"));

fn is_separator(c: char) -> bool {
    c.is_whitespace() || matches!(c, '-' | '_' | ':' | '/')
}

/// Canonical comparison form of a label or answer.
///
/// NFKC, lowercase, `(e1,e2)` / `(e2,e1)` rewritten to `_e1e2` / `_e2e1`,
/// surrounding punctuation and quotes removed, and every run of space,
/// hyphen, underscore, colon or slash collapsed to one underscore.
pub fn canonicalize(text: &str) -> String {
    let lowered: String = text.nfkc().collect::<String>().to_lowercase();
    let directed = DIRECTION.replace_all(&lowered, "_${1}${2}");
    let trimmed = directed.trim_matches(|c: char| !c.is_alphanumeric());

    let mut out = String::with_capacity(trimmed.len());
    let mut pending_sep = false;
    for c in trimmed.chars() {
        if is_separator(c) {
            pending_sep = true;
        } else {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c);
        }
    }
    out
}

/// Precomputed canonical forms for one schema.
#[derive(Debug, Clone)]
pub struct LabelMatcher<'a> {
    schema: &'a RelationSchema,
    canonical: Vec<String>,
    policy: NormalizationPolicy,
}

impl<'a> LabelMatcher<'a> {
    pub fn new(schema: &'a RelationSchema, policy: NormalizationPolicy) -> Self {
        let canonical = schema.labels().iter().map(|l| canonicalize(l)).collect();
        LabelMatcher { schema, canonical, policy }
    }

    pub fn normalize(&self, raw: &str) -> Normalized {
        let labels = self.schema.labels();
        if let Some(pos) = self.schema.position(raw) {
            return self.matched(&labels[pos], MatchKind::Exact);
        }
        if self.policy == NormalizationPolicy::Exact {
            return self.unparseable();
        }

        let canon = canonicalize(raw);
        if !canon.is_empty() {
            let mut hits = self.canonical.iter().enumerate().filter(|(_, c)| **c == canon);
            if let (Some((i, _)), None) = (hits.next(), hits.next()) {
                return self.matched(&labels[i], MatchKind::Canonical);
            }
        }
        if self.policy == NormalizationPolicy::Canonical || canon.is_empty() {
            return self.unparseable();
        }

        // max_by_key keeps the last maximum; iterate in reverse so the
        // earliest label in schema order wins ties.
        let best = self
            .canonical
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, c)| !c.is_empty() && canon.contains(c.as_str()))
            .max_by_key(|(_, c)| c.len());
        match best {
            Some((i, _)) => self.matched(&labels[i], MatchKind::Containment),
            None => self.unparseable(),
        }
    }

    fn matched(&self, label: &str, match_kind: MatchKind) -> Normalized {
        Normalized { normalized_label: label.to_string(), match_kind, scored_label: label.to_string() }
    }

    fn unparseable(&self) -> Normalized {
        Normalized {
            normalized_label: UNPARSEABLE.to_string(),
            match_kind: MatchKind::Unparseable,
            scored_label: self.schema.negative_label.clone(),
        }
    }
}

/// One-shot form of [`LabelMatcher::normalize`].
pub fn normalize_output(raw: &str, schema: &RelationSchema, policy: NormalizationPolicy) -> Normalized {
    LabelMatcher::new(schema, policy).normalize(raw)
}
