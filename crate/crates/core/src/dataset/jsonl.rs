use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{IngestError, RelationInstance, Span, Split};

/// Canonical on-disk form of a [`RelationInstance`]: one object per line,
/// keys in exactly this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub head_start: usize,
    pub head_end: usize,
    pub tail_start: usize,
    pub tail_end: usize,
    pub head_type: Option<String>,
    pub tail_type: Option<String>,
    pub gold_label: String,
    pub split: Split,
}

impl From<&RelationInstance> for InstanceRecord {
    fn from(i: &RelationInstance) -> Self {
        InstanceRecord {
            id: i.id.clone(),
            tokens: i.tokens.clone(),
            head_start: i.head.start,
            head_end: i.head.end,
            tail_start: i.tail.start,
            tail_end: i.tail.end,
            head_type: i.head_type.clone(),
            tail_type: i.tail_type.clone(),
            gold_label: i.gold_label.clone(),
            split: i.split,
        }
    }
}

impl From<InstanceRecord> for RelationInstance {
    fn from(r: InstanceRecord) -> Self {
        RelationInstance {
            id: r.id,
            tokens: r.tokens,
            head: Span::new(r.head_start, r.head_end),
            tail: Span::new(r.tail_start, r.tail_end),
            head_type: r.head_type,
            tail_type: r.tail_type,
            gold_label: r.gold_label,
            split: r.split,
        }
    }
}

pub fn write_instances_jsonl<W: Write>(mut writer: W, instances: &[RelationInstance]) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut writer, &InstanceRecord::from(inst))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn read_instances_jsonl<R: BufRead>(reader: R) -> Result<Vec<RelationInstance>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: InstanceRecord =
            serde_json::from_str(&line).map_err(|e| IngestError::Parse { line: i + 1, message: e.to_string() })?;
        let inst = RelationInstance::from(record);
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}
