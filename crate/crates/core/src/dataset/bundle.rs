use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{
    read_instances_jsonl, write_instances_jsonl, IngestError, KnownDataset, RelationInstance, RelationSchema, Split,
};

pub const BUNDLE_SCHEMA_FILE: &str = "schema.json";

/// A validated dataset: schema plus three split-disjoint instance lists.
/// Immutable once assembled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetBundle {
    schema: RelationSchema,
    train: Vec<RelationInstance>,
    test: Vec<RelationInstance>,
    prompt: Vec<RelationInstance>,
}

/// Validates every instance against `schema` and checks that no id is shared
/// between splits.
pub fn assemble_bundle(
    schema: RelationSchema,
    train: Vec<RelationInstance>,
    test: Vec<RelationInstance>,
    prompt: Vec<RelationInstance>,
) -> Result<DatasetBundle, IngestError> {
    if schema.known_dataset() == Some(KnownDataset::SemEval) && !prompt.is_empty() {
        return Err(IngestError::SemEvalPromptSplit);
    }

    let mut owner: HashMap<&str, Split> = HashMap::new();
    let mut overlap = BTreeSet::new();
    for (split, list) in [(Split::Train, &train), (Split::Test, &test), (Split::Prompt, &prompt)] {
        let mut local = HashSet::with_capacity(list.len());
        for inst in list.iter() {
            inst.validate()?;
            if inst.split != split {
                return Err(IngestError::invalid(
                    &inst.id,
                    format!("tagged {} but placed in the {split} split", inst.split),
                ));
            }
            if !schema.contains(&inst.gold_label) {
                return Err(IngestError::UnknownLabel {
                    id: inst.id.clone(),
                    label: inst.gold_label.clone(),
                    dataset: schema.dataset_name.clone(),
                });
            }
            if !local.insert(inst.id.as_str()) {
                return Err(IngestError::DuplicateId { id: inst.id.clone(), split: split.to_string() });
            }
            if let Some(prev) = owner.insert(inst.id.as_str(), split) {
                if prev != split {
                    overlap.insert(inst.id.clone());
                }
            }
        }
    }
    if !overlap.is_empty() {
        return Err(IngestError::SplitOverlap { ids: overlap.into_iter().collect() });
    }

    Ok(DatasetBundle { schema, train, test, prompt })
}

impl DatasetBundle {
    pub fn schema(&self) -> &RelationSchema {
        &self.schema
    }

    pub fn split(&self, split: Split) -> &[RelationInstance] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
            Split::Prompt => &self.prompt,
        }
    }

    pub fn train(&self) -> &[RelationInstance] {
        &self.train
    }

    pub fn test(&self) -> &[RelationInstance] {
        &self.test
    }

    pub fn prompt(&self) -> &[RelationInstance] {
        &self.prompt
    }

    pub fn counts(&self) -> [(Split, usize); 3] {
        [(Split::Train, self.train.len()), (Split::Test, self.test.len()), (Split::Prompt, self.prompt.len())]
    }

    /// Writes `schema.json` plus `train.jsonl`, `test.jsonl`, `prompt.jsonl`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), IngestError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| IngestError::io(dir, e))?;
        let schema_path = dir.join(BUNDLE_SCHEMA_FILE);
        let json = serde_json::to_string_pretty(&self.schema).expect("schema serializes");
        fs::write(&schema_path, json + "\n").map_err(|e| IngestError::io(&schema_path, e))?;
        for split in Split::ALL {
            let path = dir.join(format!("{split}.jsonl"));
            let file = File::create(&path).map_err(|e| IngestError::io(&path, e))?;
            write_instances_jsonl(BufWriter::new(file), self.split(split)).map_err(|e| IngestError::io(&path, e))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`DatasetBundle::save`] and re-validates it.
    /// A missing split file is treated as an empty split.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, IngestError> {
        let dir = dir.as_ref();
        let schema_path = dir.join(BUNDLE_SCHEMA_FILE);
        let text = fs::read_to_string(&schema_path).map_err(|e| IngestError::io(&schema_path, e))?;
        let schema: RelationSchema = serde_json::from_str(&text).map_err(|e| super::tacred::json_error(&text, &e))?;

        let read = |split: Split| -> Result<Vec<RelationInstance>, IngestError> {
            let path = dir.join(format!("{split}.jsonl"));
            if !path.exists() {
                return Ok(Vec::new());
            }
            let file = File::open(&path).map_err(|e| IngestError::io(&path, e))?;
            read_instances_jsonl(BufReader::new(file))
        };
        assemble_bundle(schema, read(Split::Train)?, read(Split::Test)?, read(Split::Prompt)?)
    }
}
