use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;

/// Which partition of a benchmark an instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Prompt,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Prompt];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Prompt => "prompt",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "prompt" => Ok(Split::Prompt),
            other => Err(format!("unknown split {other:?} (expected train, test or prompt)")),
        }
    }
}

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// One annotated sentence with a head and a tail entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub head: Span,
    pub tail: Span,
    pub head_type: Option<String>,
    pub tail_type: Option<String>,
    /// Stored verbatim; see `normalize` for canonical comparison.
    pub gold_label: String,
    pub split: Split,
}

impl RelationInstance {
    /// Checks that both spans are non-empty and lie inside the token list.
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.id.is_empty() {
            return Err(IngestError::invalid("<empty>", "instance id is empty"));
        }
        let n = self.tokens.len();
        for (role, span) in [("head", self.head), ("tail", self.tail)] {
            if span.is_empty() {
                return Err(IngestError::invalid(&self.id, format!("{role} span {span} is empty")));
            }
            if span.end > n {
                return Err(IngestError::invalid(&self.id, format!("{role} span {span} exceeds {n} tokens")));
            }
        }
        Ok(())
    }

    /// Tokens joined by single spaces.
    pub fn sentence(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn head_text(&self) -> String {
        self.span_text(self.head)
    }

    pub fn tail_text(&self) -> String {
        self.span_text(self.tail)
    }

    fn span_text(&self, span: Span) -> String {
        self.tokens[span.start..span.end].join(" ")
    }
}
