//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use rand::Rng;
use relrag_core::client::{MockGenerator, MockRule};
use relrag_core::dataset::{assemble_bundle, DatasetBundle, RelationInstance, RelationSchema, Span, Split};
use relrag_core::ExperimentConfig;

pub const TOY_LABELS: [&str; 5] =
    ["org:founded_by", "per:employee_of", "per:city_of_birth", "org:member_of", "no_relation"];

const PEOPLE: [&str; 8] = ["Alice", "Bruno", "Chiara", "Dmitri", "Eun", "Farah", "Goran", "Hana"];
const ORGS: [&str; 6] = ["Acme", "Initech", "Globex", "Umbrella", "Hooli", "Vandelay"];
const CITIES: [&str; 5] = ["Lyon", "Osaka", "Quito", "Tartu", "Perth"];

/// A sentence with head/tail spans whose wording depends on the label, plus a
/// unique fixed-width marker token (`ref-<split>-<nnnn>`) so mock rules can target it.
fn toy_instance(split: Split, n: usize) -> RelationInstance {
    let label = TOY_LABELS[(n * 7 + n / 3) % TOY_LABELS.len()];
    let p = PEOPLE[n % PEOPLE.len()];
    let o = ORGS[(n / 2) % ORGS.len()];
    let c = CITIES[(n / 3) % CITIES.len()];
    let marker = format!("ref-{}-{n:04}", split.as_str());
    let (words, head, tail): (Vec<String>, Span, Span) = match label {
        "org:founded_by" => (
            [o, "was", "founded", "by", p, "in", "note", &marker].iter().map(|s| s.to_string()).collect(),
            Span::new(0, 1),
            Span::new(4, 5),
        ),
        "per:employee_of" => (
            [p, "works", "as", "an", "engineer", "at", o, "per", &marker].iter().map(|s| s.to_string()).collect(),
            Span::new(0, 1),
            Span::new(6, 7),
        ),
        "per:city_of_birth" => (
            [p, "was", "born", "in", c, "long", "ago", &marker].iter().map(|s| s.to_string()).collect(),
            Span::new(0, 1),
            Span::new(4, 5),
        ),
        "org:member_of" => (
            [o, "joined", "the", "alliance", "led", "by", ORGS[(n + 1) % ORGS.len()], &marker]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            Span::new(0, 1),
            Span::new(6, 7),
        ),
        _ => (
            [p, "visited", c, "while", o, "reported", "earnings", &marker].iter().map(|s| s.to_string()).collect(),
            Span::new(0, 1),
            Span::new(4, 5),
        ),
    };
    RelationInstance {
        id: format!("{}-{n:04}", split.as_str()),
        tokens: words,
        head,
        tail,
        head_type: None,
        tail_type: None,
        gold_label: label.to_string(),
        split,
    }
}

pub fn toy_schema() -> RelationSchema {
    RelationSchema::new("toy", TOY_LABELS, "no_relation", false).unwrap()
}

pub fn toy_bundle(train: usize, test: usize, prompt: usize) -> DatasetBundle {
    let make = |split, n| (0..n).map(|i| toy_instance(split, i)).collect::<Vec<_>>();
    assemble_bundle(toy_schema(), make(Split::Train, train), make(Split::Test, test), make(Split::Prompt, prompt))
        .unwrap()
}

/// Mock rules answering each test instance (matched by its marker) with
/// `answer(instance)`.
pub fn rules_for(instances: &[RelationInstance], answer: impl Fn(&RelationInstance) -> String) -> Vec<MockRule> {
    instances.iter().map(|i| MockRule::Match { pattern: marker(i), completion: answer(i) }).collect()
}

pub fn marker(i: &RelationInstance) -> String {
    i.tokens.last().unwrap().clone()
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub bundle: DatasetBundle,
}

impl Workspace {
    pub fn new(train: usize, test: usize, prompt: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let bundle = toy_bundle(train, test, prompt);
        bundle.save(dir.path().join("bundle")).unwrap();
        Workspace { dir, bundle }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn write_mock(&self, name: &str, rules: &[MockRule]) -> PathBuf {
        let p = self.path(name);
        MockGenerator::write_fixture(&p, rules).unwrap();
        p
    }

    /// Config text for a run writing into `out` with its own cache.
    pub fn config(&self, method: &str, mock: &Path, out: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "dataset_name = toy\nbundle_path = {}\nmethod = {method}\ngeneration_endpoint = mock:{}\n\
             generation_model_id = toy-7b\noutput_dir = {}\nparallelism = 4\nretry_attempts = 1\n{extra}",
            self.path("bundle").display(),
            mock.display(),
            self.path(out).display(),
        ))
        .unwrap()
    }
}

/// Reference metrics from a dense confusion matrix.
pub struct OracleMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `matrix[g][p]` counts pairs with gold label `g` and prediction `p`.
/// Positive-class scoring drops the negative label's diagonal and charges
/// off-diagonal cells to the non-negative side(s); all-class counts every
/// cell.
pub fn confusion_oracle(
    labels: &[String],
    negative: &str,
    golds: &[String],
    preds: &[String],
    all_class: bool,
) -> OracleMetrics {
    let n = labels.len();
    let idx = |l: &String| labels.iter().position(|x| x == l).expect("label in schema");
    let mut matrix = vec![vec![0u64; n]; n];
    for (g, p) in golds.iter().zip(preds) {
        matrix[idx(g)][idx(p)] += 1;
    }
    let neg = labels.iter().position(|l| l == negative).expect("negative in schema");
    let counted = |i: usize| all_class || i != neg;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, row) in matrix.iter().enumerate() {
        for (p, &c) in row.iter().enumerate() {
            if g == p {
                if counted(g) {
                    tp += c;
                }
            } else {
                if counted(p) {
                    fp += c;
                }
                if counted(g) {
                    fn_ += c;
                }
            }
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    OracleMetrics { tp, fp, fn_, precision, recall, f1 }
}

/// Ranks every vector against `query` by cosine (f64 throughout, vectors
/// normalized first) and returns the first `k` ids, ties by ascending id.
pub fn exhaustive_top_k(ids: &[String], vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let unit = |v: &[f32]| {
        let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        v.iter().map(|x| f64::from(*x) / n).collect::<Vec<f64>>()
    };
    let q = unit(query);
    let mut all: Vec<(String, f64)> =
        ids.iter().zip(vectors).map(|(id, v)| (id.clone(), unit(v).iter().zip(&q).map(|(a, b)| a * b).sum())).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}
