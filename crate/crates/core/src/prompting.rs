//! Prompt templates, simple and retrieval-augmented query rendering, and the
//! prompt dataset used for fine-tuning.
//!
//! Templates are plain text with `{placeholder}` slots; `{{` and `}}` produce
//! literal braces. A single trailing newline in a template file is dropped.
//!
//! An augmented prompt is one rendered example block per retrieved training
//! instance, a blank line, then the simple query for the target. Removing the
//! example blocks therefore yields the simple prompt byte for byte.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{RelationInstance, RelationSchema, Split};

pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/simple_query.txt");
pub const TYPED_TEMPLATE: &str = include_str!("../templates/simple_query_typed.txt");
pub const DEFAULT_EXAMPLE_TEMPLATE: &str = include_str!("../templates/example_block.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template}: no value for placeholder {{{placeholder}}}")]
    MissingValue { template: String, placeholder: Placeholder },
    #[error("template {template}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {template}: unbalanced brace at byte {offset}")]
    UnbalancedBrace { template: String, offset: usize },
    #[error("schema has an empty relation list")]
    EmptyRelationList,
    #[error("example {0} is the target instance itself")]
    SelfLeakage(String),
    #[error("example {id} comes from the {split} split; examples must come from train")]
    ExampleNotFromTrain { id: String, split: Split },
    #[error("instance {id}: label {label:?} is not in the schema")]
    UnknownLabel { id: String, label: String },
    #[error("augmented prompt needs at least one example")]
    NoExamples,
    #[error(transparent)]
    Instance(#[from] crate::dataset::IngestError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placeholder {
    Sentence,
    HeadEntity,
    TailEntity,
    HeadType,
    TailType,
    RelationList,
    ExampleSentence,
    ExampleHead,
    ExampleTail,
    ExampleRelation,
}

impl Placeholder {
    pub const ALL: [Placeholder; 10] = [
        Placeholder::Sentence,
        Placeholder::HeadEntity,
        Placeholder::TailEntity,
        Placeholder::HeadType,
        Placeholder::TailType,
        Placeholder::RelationList,
        Placeholder::ExampleSentence,
        Placeholder::ExampleHead,
        Placeholder::ExampleTail,
        Placeholder::ExampleRelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Sentence => "sentence",
            Placeholder::HeadEntity => "head_entity",
            Placeholder::TailEntity => "tail_entity",
            Placeholder::HeadType => "head_type",
            Placeholder::TailType => "tail_type",
            Placeholder::RelationList => "relation_list",
            Placeholder::ExampleSentence => "example_sentence",
            Placeholder::ExampleHead => "example_head",
            Placeholder::ExampleTail => "example_tail",
            Placeholder::ExampleRelation => "example_relation",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Placeholder {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Placeholder::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Placeholder),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    segments: Vec<Segment>,
    required: BTreeSet<Placeholder>,
}

impl PromptTemplate {
    pub fn parse(name: impl Into<String>, body: impl Into<String>) -> Result<Self, PromptError> {
        let name = name.into();
        let body = body.into();
        let mut segments = Vec::new();
        let mut required = BTreeSet::new();
        let mut text = String::new();
        let mut chars = body.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if matches!(chars.peek(), Some((_, '{'))) => {
                    chars.next();
                    text.push('{');
                }
                '}' if matches!(chars.peek(), Some((_, '}'))) => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let rest = &body[i + 1..];
                    let close = rest
                        .find('}')
                        .ok_or_else(|| PromptError::UnbalancedBrace { template: name.clone(), offset: i })?;
                    let key = &rest[..close];
                    let slot = key.parse::<Placeholder>().map_err(|_| PromptError::UnknownPlaceholder {
                        template: name.clone(),
                        name: key.to_string(),
                    })?;
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Slot(slot));
                    required.insert(slot);
                    for _ in 0..key.chars().count() + 1 {
                        chars.next();
                    }
                }
                '}' => return Err(PromptError::UnbalancedBrace { template: name, offset: i }),
                _ => text.push(c),
            }
        }
        if !text.is_empty() {
            segments.push(Segment::Text(text));
        }
        Ok(PromptTemplate { name, body, segments, required })
    }

    /// Loads a template file; the file stem becomes the template name.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let body =
            fs::read_to_string(path).map_err(|source| PromptError::Io { path: path.display().to_string(), source })?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "template".into());
        PromptTemplate::parse(name, strip_trailing_newline(&body))
    }

    pub fn default_simple() -> Self {
        PromptTemplate::parse("simple_query", strip_trailing_newline(DEFAULT_TEMPLATE))
            .expect("bundled template parses")
    }

    pub fn typed_simple() -> Self {
        PromptTemplate::parse("simple_query_typed", strip_trailing_newline(TYPED_TEMPLATE))
            .expect("bundled template parses")
    }

    pub fn default_example() -> Self {
        PromptTemplate::parse("example_block", strip_trailing_newline(DEFAULT_EXAMPLE_TEMPLATE))
            .expect("bundled template parses")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<Placeholder> {
        &self.required
    }

    pub fn render(&self, values: &Values) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() * 2);
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(p) => out.push_str(
                    values
                        .get(*p)
                        .ok_or_else(|| PromptError::MissingValue { template: self.name.clone(), placeholder: *p })?,
                ),
            }
        }
        Ok(out)
    }
}

fn strip_trailing_newline(s: &str) -> &str {
    s.strip_suffix("\r\n").or_else(|| s.strip_suffix('\n')).unwrap_or(s)
}

/// Substitution map for [`PromptTemplate::render`].
#[derive(Debug, Clone, Default)]
pub struct Values([Option<String>; 10]);

impl Values {
    pub fn set(&mut self, p: Placeholder, value: impl Into<String>) -> &mut Self {
        self.0[p.index()] = Some(value.into());
        self
    }

    pub fn get(&self, p: Placeholder) -> Option<&str> {
        self.0[p.index()].as_deref()
    }
}

/// Query template plus the block used for each in-context example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub query: PromptTemplate,
    pub example: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet { query: PromptTemplate::default_simple(), example: PromptTemplate::default_example() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Simple,
    Augmented,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRecord {
    pub instance_id: String,
    pub prompt_text: String,
    pub expected_completion: String,
    pub mode: PromptMode,
    pub template_name: String,
}

/// Exchange format consumed by the fine-tuning trainer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDatasetRow {
    pub instance_id: String,
    pub prompt: String,
    pub completion: String,
}

impl From<&PromptRecord> for PromptDatasetRow {
    fn from(r: &PromptRecord) -> Self {
        PromptDatasetRow {
            instance_id: r.instance_id.clone(),
            prompt: r.prompt_text.clone(),
            completion: r.expected_completion.clone(),
        }
    }
}

/// Schema labels in sorted order, comma separated.
pub fn relation_list(labels: &[String]) -> Result<String, PromptError> {
    if labels.is_empty() {
        return Err(PromptError::EmptyRelationList);
    }
    Ok(labels.join(", "))
}

fn query_values(instance: &RelationInstance, schema: &RelationSchema) -> Result<Values, PromptError> {
    instance.validate()?;
    let mut v = Values::default();
    v.set(Placeholder::Sentence, instance.sentence())
        .set(Placeholder::HeadEntity, instance.head_text())
        .set(Placeholder::TailEntity, instance.tail_text())
        .set(Placeholder::RelationList, relation_list(schema.labels())?);
    if let Some(t) = &instance.head_type {
        v.set(Placeholder::HeadType, t.clone());
    }
    if let Some(t) = &instance.tail_type {
        v.set(Placeholder::TailType, t.clone());
    }
    Ok(v)
}

fn check_label(id: &str, label: &str, schema: &RelationSchema) -> Result<(), PromptError> {
    if schema.contains(label) {
        Ok(())
    } else {
        Err(PromptError::UnknownLabel { id: id.to_string(), label: label.to_string() })
    }
}

pub fn render_simple_query(
    instance: &RelationInstance,
    schema: &RelationSchema,
    template: &PromptTemplate,
) -> Result<PromptRecord, PromptError> {
    check_label(&instance.id, &instance.gold_label, schema)?;
    let prompt_text = template.render(&query_values(instance, schema)?)?;
    Ok(PromptRecord {
        instance_id: instance.id.clone(),
        prompt_text,
        expected_completion: instance.gold_label.clone(),
        mode: PromptMode::Simple,
        template_name: template.name().to_string(),
    })
}

/// Renders a prompt with one in-context example.
pub fn render_augmented_query(
    instance: &RelationInstance,
    example: &RelationInstance,
    example_label: &str,
    schema: &RelationSchema,
    templates: &TemplateSet,
) -> Result<PromptRecord, PromptError> {
    render_augmented_query_k(instance, &[(example, example_label)], schema, templates)
}

/// Renders a prompt with one example block per retrieved training instance,
/// in the order given.
pub fn render_augmented_query_k(
    instance: &RelationInstance,
    examples: &[(&RelationInstance, &str)],
    schema: &RelationSchema,
    templates: &TemplateSet,
) -> Result<PromptRecord, PromptError> {
    if examples.is_empty() {
        return Err(PromptError::NoExamples);
    }
    let mut blocks = Vec::with_capacity(examples.len());
    for (example, label) in examples {
        if example.id == instance.id {
            return Err(PromptError::SelfLeakage(example.id.clone()));
        }
        if example.split != Split::Train {
            return Err(PromptError::ExampleNotFromTrain { id: example.id.clone(), split: example.split });
        }
        check_label(&example.id, label, schema)?;
        let mut v = query_values(example, schema)?;
        v.set(Placeholder::ExampleSentence, example.sentence())
            .set(Placeholder::ExampleHead, example.head_text())
            .set(Placeholder::ExampleTail, example.tail_text())
            .set(Placeholder::ExampleRelation, *label);
        blocks.push(templates.example.render(&v)?);
    }
    let simple = render_simple_query(instance, schema, &templates.query)?;
    let mut prompt_text = blocks.join("\n");
    prompt_text.push_str("\n\n");
    prompt_text.push_str(&simple.prompt_text);
    Ok(PromptRecord { prompt_text, mode: PromptMode::Augmented, ..simple })
}

/// One simple-mode record per instance, in input order.
pub fn build_prompt_dataset(
    split: &[RelationInstance],
    schema: &RelationSchema,
    template: &PromptTemplate,
) -> Result<Vec<PromptRecord>, PromptError> {
    split.iter().map(|i| render_simple_query(i, schema, template)).collect()
}

pub fn write_prompt_dataset<W: Write>(mut writer: W, records: &[PromptRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, &PromptDatasetRow::from(r))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}
