use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestError, KnownDataset, RelationInstance, RelationSchema, Span, Split};

/// One element of an LDC-layout TACRED JSON array. Span ends are inclusive.
/// Fields beyond these (POS tags, dependency heads, ...) are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TacredRecord {
    pub id: String,
    pub token: Vec<String>,
    pub subj_start: usize,
    pub subj_end: usize,
    pub obj_start: usize,
    pub obj_end: usize,
    #[serde(default)]
    pub subj_type: Option<String>,
    #[serde(default)]
    pub obj_type: Option<String>,
    pub relation: String,
}

impl TacredRecord {
    fn into_instance(self, split: Split) -> RelationInstance {
        RelationInstance {
            id: self.id,
            tokens: self.token,
            head: Span::new(self.subj_start, self.subj_end.saturating_add(1)),
            tail: Span::new(self.obj_start, self.obj_end.saturating_add(1)),
            head_type: self.subj_type,
            tail_type: self.obj_type,
            gold_label: self.relation,
            split,
        }
    }

    /// Inverse of the loader's conversion; used to write fixtures.
    pub fn from_instance(inst: &RelationInstance) -> Self {
        TacredRecord {
            id: inst.id.clone(),
            token: inst.tokens.clone(),
            subj_start: inst.head.start,
            subj_end: inst.head.end - 1,
            obj_start: inst.tail.start,
            obj_end: inst.tail.end - 1,
            subj_type: inst.head_type.clone(),
            obj_type: inst.tail_type.clone(),
            relation: inst.gold_label.clone(),
        }
    }
}

/// Loads a TACRED, TACREV or Re-TACRED JSON file.
///
/// TACREV and Re-TACRED are the outputs of their projects' relabeling
/// scripts, which keep the original file layout.
pub fn load_tacred_family(
    path: impl AsRef<Path>,
    dataset_name: &str,
    split: Split,
    schema: Option<&RelationSchema>,
) -> Result<Vec<RelationInstance>, IngestError> {
    if KnownDataset::from_name(dataset_name) == Some(KnownDataset::SemEval) {
        return Err(IngestError::Schema("SemEVAL files use the sentence/relation text format, not TACRED JSON".into()));
    }
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_tacred_json(&text, split, schema)
}

pub fn parse_tacred_json(
    text: &str,
    split: Split,
    schema: Option<&RelationSchema>,
) -> Result<Vec<RelationInstance>, IngestError> {
    let records: Vec<TacredRecord> = serde_json::from_str(text).map_err(|e| json_error(text, &e))?;

    let mut seen = HashSet::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let inst = record.into_instance(split);
        inst.validate()?;
        if let Some(schema) = schema {
            if !schema.contains(&inst.gold_label) {
                return Err(IngestError::UnknownLabel {
                    id: inst.id,
                    label: inst.gold_label,
                    dataset: schema.dataset_name.clone(),
                });
            }
        }
        if !seen.insert(inst.id.clone()) {
            return Err(IngestError::DuplicateId { id: inst.id, split: split.to_string() });
        }
        out.push(inst);
    }
    Ok(out)
}

/// serde_json reports 1-based line/column; convert to a byte offset.
pub(crate) fn json_error(text: &str, err: &serde_json::Error) -> IngestError {
    let offset = byte_offset(text, err.line(), err.column());
    IngestError::Json { offset, message: err.to_string() }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
