use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{IngestError, KnownDataset, RelationInstance};

/// A dataset's closed label set.
///
/// Labels are kept in sorted byte order; prompts enumerate them in this order
/// and normalization breaks ties with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct RelationSchema {
    pub dataset_name: String,
    labels: Vec<String>,
    pub negative_label: String,
    pub directional: bool,
}

#[derive(Deserialize)]
struct RawSchema {
    dataset_name: String,
    labels: Vec<String>,
    negative_label: String,
    directional: bool,
}

impl TryFrom<RawSchema> for RelationSchema {
    type Error = IngestError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        RelationSchema::new(raw.dataset_name, raw.labels, raw.negative_label, raw.directional)
    }
}

impl RelationSchema {
    pub fn new(
        dataset_name: impl Into<String>,
        labels: impl IntoIterator<Item = impl Into<String>>,
        negative_label: impl Into<String>,
        directional: bool,
    ) -> Result<Self, IngestError> {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let negative_label = negative_label.into();
        let before = labels.len();
        labels.sort();
        labels.dedup();
        if labels.len() != before {
            return Err(IngestError::Schema("labels are not unique".into()));
        }
        if labels.iter().any(String::is_empty) {
            return Err(IngestError::Schema("empty label".into()));
        }
        if labels.binary_search(&negative_label).is_err() {
            return Err(IngestError::Schema(format!("negative label {negative_label:?} is not in the label set")));
        }
        Ok(RelationSchema { dataset_name: dataset_name.into(), labels, negative_label, directional })
    }

    /// Full published inventory for TACRED or SemEval.
    pub fn builtin(dataset: KnownDataset) -> Option<Self> {
        let labels: &[&str] = match dataset {
            KnownDataset::Tacred | KnownDataset::Tacrev => &super::TACRED_LABELS,
            KnownDataset::SemEval => &super::SEMEVAL_LABELS,
            KnownDataset::ReTacred => return None,
        };
        Some(
            RelationSchema::new(
                dataset.name(),
                labels.iter().copied(),
                dataset.negative_label(),
                dataset.directional(),
            )
            .expect("builtin label inventories are well formed"),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    /// Index of `label` in sorted order.
    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn is_negative(&self, label: &str) -> bool {
        label == self.negative_label
    }

    pub fn known_dataset(&self) -> Option<KnownDataset> {
        KnownDataset::from_name(&self.dataset_name)
    }
}

/// Derives a schema from the distinct gold labels in `instances`.
///
/// The negative label and directionality follow the dataset-name convention
/// (`Other` and directional for SemEval, `no_relation` otherwise); the negative
/// label is injected when no instance carries it. Named benchmarks must produce
/// exactly their published label count.
pub fn derive_schema(instances: &[RelationInstance], dataset_name: &str) -> Result<RelationSchema, IngestError> {
    if instances.is_empty() {
        return Err(IngestError::Empty);
    }
    let known = KnownDataset::from_name(dataset_name);
    let negative = known.map_or("no_relation", KnownDataset::negative_label);
    let directional = known.is_some_and(KnownDataset::directional);

    let mut labels: BTreeSet<&str> = instances.iter().map(|i| i.gold_label.as_str()).collect();
    labels.insert(negative);

    if let Some(known) = known {
        let expected = known.counts().relations;
        if labels.len() != expected {
            return Err(IngestError::LabelCount { dataset: known.name().to_string(), expected, found: labels.len() });
        }
    }
    let name = known.map_or_else(|| dataset_name.to_string(), |k| k.name().to_string());
    RelationSchema::new(name, labels, negative, directional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Span, Split, SEMEVAL_LABELS};

    fn inst(id: &str, label: &str) -> RelationInstance {
        RelationInstance {
            id: id.into(),
            tokens: vec!["a".into(), "b".into()],
            head: Span::new(0, 1),
            tail: Span::new(1, 2),
            head_type: None,
            tail_type: None,
            gold_label: label.into(),
            split: Split::Train,
        }
    }

    #[test]
    fn single_label_gets_negative_injected() {
        let schema = derive_schema(&[inst("1", "L"), inst("2", "L")], "custom").unwrap();
        assert_eq!(schema.labels(), ["L", "no_relation"]);
        assert_eq!(schema.negative_label, "no_relation");
        assert!(!schema.directional);
    }

    #[test]
    fn semeval_full_inventory() {
        let instances: Vec<_> = SEMEVAL_LABELS.iter().enumerate().map(|(i, l)| inst(&i.to_string(), l)).collect();
        let schema = derive_schema(&instances, "semeval").unwrap();
        assert_eq!(schema.len(), 19);
        assert_eq!(schema.negative_label, "Other");
        assert!(schema.directional);
        assert_eq!(schema.dataset_name, "SemEVAL");
    }

    #[test]
    fn named_dataset_with_wrong_count_reports_both() {
        let err = derive_schema(&[inst("1", "Cause-Effect(e1,e2)")], "SemEVAL").unwrap_err();
        match err {
            IngestError::LabelCount { expected, found, .. } => {
                assert_eq!((expected, found), (19, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(derive_schema(&[], "x"), Err(IngestError::Empty)));
    }

    #[test]
    fn schema_rejects_missing_negative_and_duplicates() {
        assert!(RelationSchema::new("x", ["a", "b"], "c", false).is_err());
        assert!(RelationSchema::new("x", ["a", "a"], "a", false).is_err());
    }

    #[test]
    fn deserialization_sorts_and_validates() {
        let s: RelationSchema =
            serde_json::from_str(r#"{"dataset_name":"x","labels":["b","a"],"negative_label":"a","directional":false}"#)
                .unwrap();
        assert_eq!(s.labels(), ["a", "b"]);
        assert!(serde_json::from_str::<RelationSchema>(
            r#"{"dataset_name":"x","labels":["b"],"negative_label":"a","directional":false}"#
        )
        .is_err());
    }

    #[test]
    fn builtins_are_sorted_and_complete() {
        let tacred = RelationSchema::builtin(KnownDataset::Tacred).unwrap();
        assert_eq!(tacred.len(), 42);
        let mut sorted = tacred.labels().to_vec();
        sorted.sort();
        assert_eq!(sorted, tacred.labels());
        assert!(RelationSchema::builtin(KnownDataset::ReTacred).is_none());
    }
}
