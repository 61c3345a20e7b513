//! Full runs against in-process generators and the hashing embedder.

mod common;

use std::collections::HashMap;
use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::{exhaustive_top_k, rules_for, Workspace};
use relrag_core::client::{GenerationRequest, Generator, MockGenerator, RetryPolicy, TransportError};
use relrag_core::eval::{score, ScoringMode};
use relrag_core::retrieval::{build_store, embed_text, HashingProvider, RetrievalResult};
use relrag_core::runner::{
    read_predictions, resume_with, run_experiment, run_experiment_with, ExperimentConfig, RunError, RunManifest,
    MANIFEST_FILE, PARTIAL_PREDICTIONS_FILE, PREDICTIONS_FILE, REPORT_CSV_FILE, REPORT_TEXT_FILE, RETRIEVALS_FILE,
};
use relrag_core::Method;

/// Answers with the relation named in the first example block of the prompt.
struct EchoFirstExample {
    calls: AtomicUsize,
}

impl Generator for EchoFirstExample {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let first = request.prompt().lines().next().unwrap_or_default();
        let label = first.trim_end_matches('.').rsplit(" is ").next().unwrap_or_default();
        Ok(label.to_string())
    }

    fn describe(&self) -> String {
        "echo-first-example".into()
    }
}

/// Echoes gold answers from a mock, failing every call after the first `ok`.
struct FailAfter {
    inner: MockGenerator,
    ok: usize,
    calls: AtomicUsize,
}

impl Generator for FailAfter {
    fn complete(&self, request: &GenerationRequest) -> Result<String, TransportError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.ok {
            return Err(TransportError::Protocol("endpoint went away".into()));
        }
        self.inner.complete(request)
    }

    fn describe(&self) -> String {
        "fail-after".into()
    }
}

fn rag_workspace(train: usize, test: usize) -> (Workspace, String) {
    let ws = Workspace::new(train, test, 5);
    let store = build_store(ws.bundle.train(), &HashingProvider, &RetryPolicy::immediate(1)).unwrap();
    let path = ws.path("store.bin");
    store.save(&path).unwrap();
    let extra = format!("embedding_endpoint = test\nstore_path = {}\n", path.display());
    (ws, extra)
}

#[test]
fn rag_with_nearest_label_scores_like_brute_force_agreement() {
    let (ws, extra) = rag_workspace(150, 60);
    let config = ws.config("rag", &ws.path("unused.jsonl"), "out", &format!("{extra}k = 1\n"));
    let generator = Arc::new(EchoFirstExample { calls: AtomicUsize::new(0) });
    let manifest = run_experiment_with(&config, Box::new(generator.clone()), Some(&HashingProvider)).unwrap();
    assert_eq!(generator.calls.load(Ordering::SeqCst), 60);

    let policy = RetryPolicy::immediate(1);
    let train = ws.bundle.train();
    let ids: Vec<String> = train.iter().map(|i| i.id.clone()).collect();
    let vectors: Vec<Vec<f32>> =
        train.iter().map(|i| embed_text(&HashingProvider, &i.sentence(), &policy).unwrap()).collect();
    let gold_of: HashMap<&str, &str> = train.iter().map(|i| (i.id.as_str(), i.gold_label.as_str())).collect();
    let agree = ws
        .bundle
        .test()
        .iter()
        .filter(|t| {
            let q = embed_text(&HashingProvider, &t.sentence(), &policy).unwrap();
            let (nn, _) = &exhaustive_top_k(&ids, &vectors, &q, 1)[0];
            gold_of[nn.as_str()] == t.gold_label
        })
        .count();
    let want = agree as f64 / 60.0;
    let got = manifest.metrics_for(ScoringMode::AllClass).unwrap();
    assert!((got.f1 - want).abs() < 1e-12, "all-class F1 {} vs agreement {want}", got.f1);
    assert_eq!(got.precision, got.recall);

    let retrievals: Vec<RetrievalResult> = fs::read_to_string(ws.path("out").join(RETRIEVALS_FILE))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(retrievals.len(), 60);
    assert!(retrievals.iter().all(|r| r.neighbor_id.starts_with("train-")));
}

#[test]
fn resume_after_failure_issues_only_the_remainder() {
    let ws = Workspace::new(50, 80, 5);
    let mock_path = ws.write_mock("gold.jsonl", &rules_for(ws.bundle.test(), |i| i.gold_label.clone()));
    let config = ws.config("simple", &mock_path, "out", "");
    let flaky = FailAfter { inner: MockGenerator::from_file(&mock_path).unwrap(), ok: 30, calls: AtomicUsize::new(0) };
    let err = run_experiment_with(&config, Box::new(flaky), None).unwrap_err();
    let RunError::Generation { completed, total, .. } = err else { panic!("unexpected error {err}") };
    assert_eq!((completed, total), (30, 80));

    let out = ws.path("out");
    let failed = RunManifest::load(out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(failed.status, relrag_core::runner::RunStatus::Failed);
    assert!(failed.error.is_some());
    assert_eq!(read_predictions(out.join(PARTIAL_PREDICTIONS_FILE), None).unwrap().len(), 30);
    assert!(!out.join(PREDICTIONS_FILE).exists());

    let fresh = Arc::new(MockGenerator::from_file(&mock_path).unwrap());
    let done = resume_with(out.join(MANIFEST_FILE), &[], Box::new(fresh.clone()), None).unwrap();
    assert_eq!(fresh.calls(), 50);
    assert_eq!((done.cache_hits, done.requests_issued), (30, 50));
    assert!(done.resumed);
    assert!(!out.join(PARTIAL_PREDICTIONS_FILE).exists());

    // identical to a run that never failed
    let clean = ws.config("simple", &mock_path, "clean", "");
    run_experiment(&clean).unwrap();
    assert_eq!(
        fs::read(out.join(PREDICTIONS_FILE)).unwrap(),
        fs::read(ws.path("clean").join(PREDICTIONS_FILE)).unwrap()
    );
}

#[test]
fn resume_refuses_config_drift() {
    let ws = Workspace::new(20, 10, 5);
    let mock_path = ws.write_mock("gold.jsonl", &rules_for(ws.bundle.test(), |i| i.gold_label.clone()));
    run_experiment(&ws.config("simple", &mock_path, "out", "")).unwrap();
    let manifest = ws.path("out").join(MANIFEST_FILE);

    let mock = Arc::new(MockGenerator::from_file(&mock_path).unwrap());
    let err = resume_with(&manifest, &["temperature=0.5".into()], Box::new(mock.clone()), None).unwrap_err();
    match err {
        RunError::ConfigDrift(diff) => assert!(diff.iter().any(|d| d.starts_with("temperature")), "{diff:?}"),
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(mock.calls(), 0);

    // restating the recorded value is not drift
    let same = resume_with(&manifest, &["temperature=0".into(), "k=1".into()], Box::new(mock.clone()), None).unwrap();
    assert_eq!(mock.calls(), 0);
    assert_eq!(same.cache_hits, 10);
}

#[test]
fn semeval_rejects_overlapping_methods() {
    let base = "dataset_name = semeval\nbundle_path = b\ngeneration_endpoint = mock:m\ngeneration_model_id = m\n\
                output_dir = o\nembedding_endpoint = test\nstore_path = s\n";
    let parse = |extra: &str| ExperimentConfig::parse(&format!("{base}{extra}"));
    let rf = parse("method = rag_finetuned\nallow_train_overlap_prompting = true\n");
    assert!(matches!(rf, Err(RunError::MethodNotAllowed { method: Method::RagFinetuned, .. })), "{rf:?}");
    let rag = parse("method = rag\n");
    assert!(matches!(rag, Err(RunError::MethodNotAllowed { method: Method::Rag, .. })), "{rag:?}");
    parse("method = rag\nallow_train_overlap_prompting = true\n").unwrap();
    parse("method = simple\n").unwrap();
    parse("method = finetuned\n").unwrap();
}

#[test]
fn custom_dataset_without_prompt_split_follows_the_same_rules() {
    let ws = Workspace::new(20, 10, 0);
    let store = build_store(ws.bundle.train(), &HashingProvider, &RetryPolicy::immediate(1)).unwrap();
    store.save(ws.path("store.bin")).unwrap();
    let mock = ws.write_mock("any.jsonl", &rules_for(ws.bundle.test(), |i| i.gold_label.clone()));
    let extra = format!("embedding_endpoint = test\nstore_path = {}\n", ws.path("store.bin").display());
    let err = run_experiment(&ws.config("rag_finetuned", &mock, "out", &extra)).unwrap_err();
    assert!(matches!(err, RunError::MethodNotAllowed { .. }), "{err}");
    let err = run_experiment(&ws.config("rag", &mock, "out", &extra)).unwrap_err();
    assert!(matches!(err, RunError::MethodNotAllowed { .. }), "{err}");
    run_experiment(&ws.config("rag", &mock, "out", &format!("{extra}allow_train_overlap_prompting = true\n"))).unwrap();
}

#[test]
fn metrics_recompute_from_predictions_file() {
    let ws = Workspace::new(40, 70, 5);
    let mock_path = ws.write_mock(
        "mixed.jsonl",
        &rules_for(ws.bundle.test(), |i| match i.id.as_bytes()[i.id.len() - 1] % 4 {
            0 => i.gold_label.clone(),
            1 => "no_relation".into(),
            2 => format!("Answer: {}", i.gold_label.to_uppercase()),
            _ => "unsure".into(),
        }),
    );
    let manifest =
        run_experiment(&ws.config("simple", &mock_path, "out", "normalization = containment-cascade\n")).unwrap();
    let out = ws.path("out");
    let bytes = fs::read(out.join(PREDICTIONS_FILE)).unwrap();
    assert_eq!(
        manifest.predictions_sha256.as_deref(),
        Some(relrag_core::client::sha256_hex(std::str::from_utf8(&bytes).unwrap()).as_str())
    );

    let records = read_predictions(out.join(PREDICTIONS_FILE), Some(ws.bundle.schema())).unwrap();
    let ids: Vec<&str> = records.iter().map(|r| r.instance_id.as_str()).collect();
    let test_ids: Vec<&str> = ws.bundle.test().iter().map(|i| i.id.as_str()).collect();
    assert_eq!(ids, test_ids);
    let golds: HashMap<String, String> =
        ws.bundle.test().iter().map(|i| (i.id.clone(), i.gold_label.clone())).collect();
    for mode in [ScoringMode::PositiveClass, ScoringMode::AllClass] {
        assert_eq!(&score(&records, &golds, ws.bundle.schema(), mode).unwrap(), manifest.metrics_for(mode).unwrap());
    }
    assert!(manifest.unparseable_count > 0);

    let csv = fs::read_to_string(out.join(REPORT_CSV_FILE)).unwrap();
    assert!(csv.starts_with("model,method,toy P,toy R,toy F1\ntoy-7b,simple,"), "{csv}");
    assert!(fs::read_to_string(out.join(REPORT_TEXT_FILE)).unwrap().contains("all_class"));
}

#[test]
fn seed_and_parallelism_do_not_change_predictions() {
    let (ws, extra) = rag_workspace(80, 40);
    let mock_path = ws.write_mock("gold.jsonl", &rules_for(ws.bundle.test(), |i| i.gold_label.clone()));
    let mut outputs = Vec::new();
    for (out, seed, par) in [("a", 1, 1), ("b", 99, 8), ("c", 7, 3)] {
        let config = ws
            .config("rag", &mock_path, out, &format!("{extra}k = 3\n"))
            .with_overrides(&[format!("seed={seed}"), format!("parallelism={par}")])
            .unwrap();
        run_experiment(&config).unwrap();
        outputs.push((
            fs::read(ws.path(out).join(PREDICTIONS_FILE)).unwrap(),
            fs::read(ws.path(out).join(RETRIEVALS_FILE)).unwrap(),
        ));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(outputs[0].1.iter().filter(|b| **b == b'\n').count(), 120);
}

#[test]
fn shared_cache_serves_a_second_run() {
    let ws = Workspace::new(20, 15, 5);
    let mock_path = ws.write_mock("gold.jsonl", &rules_for(ws.bundle.test(), |i| i.gold_label.clone()));
    let cache = format!("cache_path = {}\n", ws.path("shared.jsonl").display());
    run_experiment(&ws.config("simple", &mock_path, "a", &cache)).unwrap();
    let mock = Arc::new(MockGenerator::from_file(&mock_path).unwrap());
    let second =
        run_experiment_with(&ws.config("simple", &mock_path, "b", &cache), Box::new(mock.clone()), None).unwrap();
    assert_eq!(mock.calls(), 0);
    assert_eq!((second.cache_hits, second.requests_issued), (15, 0));

    // a different decoding setting is a different request
    let changed = ws.config("simple", &mock_path, "c", &format!("{cache}max_new_tokens = 8\n"));
    let third = run_experiment_with(&changed, Box::new(mock.clone()), None).unwrap();
    assert_eq!((third.cache_hits, mock.calls()), (0, 15));
}
