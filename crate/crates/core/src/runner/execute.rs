use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::write_run_report;
use super::{config_diff, ExperimentConfig, RunError, RunManifest, RunStatus};
use crate::client::{
    generator_from_spec, sha256_hex, Client, GenerationRequest, Generator, ResponseCache, RetryPolicy,
};
use crate::dataset::{DatasetBundle, KnownDataset, RelationInstance, RelationSchema};
use crate::eval::{score, ScoringMode};
use crate::normalize::{LabelMatcher, PredictionRecord};
use crate::prompting::{render_augmented_query_k, render_simple_query, PromptTemplate, TemplateSet};
use crate::retrieval::{embed_text, provider_from_spec, EmbeddingProvider, EmbeddingStore, RetrievalResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
/// Predictions for the instances that finished before a run failed.
pub const PARTIAL_PREDICTIONS_FILE: &str = "predictions.partial.jsonl";
/// Every retrieved neighbour, for auditing train/test separation.
pub const RETRIEVALS_FILE: &str = "retrievals.jsonl";

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Runs `config` against the endpoints it names.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, RunError> {
    let (generator, provider) = open_endpoints(config)?;
    execute(config, generator, provider.as_deref(), false)
}

/// Runs `config` against caller-supplied endpoints; `provider` is only used
/// by retrieval methods.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    generator: Box<dyn Generator>,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<RunManifest, RunError> {
    execute(config, generator, provider, false)
}

/// Re-runs the experiment recorded in `manifest_path`, issuing only requests
/// missing from its cache. `overrides` (`key=value`) express the caller's
/// current settings; any that change the recorded config abort the resume.
pub fn resume(manifest_path: impl AsRef<Path>, overrides: &[String]) -> Result<RunManifest, RunError> {
    let config = resumable_config(manifest_path.as_ref(), overrides)?;
    let (generator, provider) = open_endpoints(&config)?;
    execute(&config, generator, provider.as_deref(), true)
}

pub fn resume_with(
    manifest_path: impl AsRef<Path>,
    overrides: &[String],
    generator: Box<dyn Generator>,
    provider: Option<&dyn EmbeddingProvider>,
) -> Result<RunManifest, RunError> {
    let config = resumable_config(manifest_path.as_ref(), overrides)?;
    execute(&config, generator, provider, true)
}

fn resumable_config(manifest_path: &Path, overrides: &[String]) -> Result<ExperimentConfig, RunError> {
    let prior = RunManifest::load(manifest_path)?;
    let current = prior.config.with_overrides(overrides)?;
    let diff = config_diff(&prior.config, &current);
    if !diff.is_empty() {
        return Err(RunError::ConfigDrift(diff));
    }
    Ok(prior.config)
}

type Endpoints = (Box<dyn Generator>, Option<Box<dyn EmbeddingProvider>>);

fn open_endpoints(config: &ExperimentConfig) -> Result<Endpoints, RunError> {
    config.validate()?;
    let generator = generator_from_spec(&config.generation_endpoint).map_err(RunError::Endpoint)?;
    let provider = match (&config.embedding_endpoint, config.method.uses_retrieval()) {
        (Some(spec), true) => {
            Some(provider_from_spec(spec, &config.embedding_model, &RetryPolicy::attempts(config.retry_attempts))?)
        }
        _ => None,
    };
    Ok((generator, provider))
}

fn check_dataset(config: &ExperimentConfig, bundle: &DatasetBundle) -> Result<(), RunError> {
    let schema = bundle.schema();
    let canonical =
        |name: &str| KnownDataset::from_name(name).map_or_else(|| name.to_string(), |k| k.name().to_string());
    if canonical(&config.dataset_name) != canonical(&schema.dataset_name) {
        return Err(RunError::DatasetMismatch {
            config: config.dataset_name.clone(),
            bundle: schema.dataset_name.clone(),
        });
    }
    if schema.known_dataset().is_none() && bundle.prompt().is_empty() {
        config.check_overlap_rules(&schema.dataset_name)?;
    }
    if bundle.test().is_empty() {
        return Err(RunError::Config(format!("bundle {} has an empty test split", config.bundle_path.display())));
    }
    Ok(())
}

fn load_templates(config: &ExperimentConfig) -> Result<TemplateSet, RunError> {
    Ok(TemplateSet {
        query: match &config.template_path {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default_simple(),
        },
        example: match &config.example_template_path {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default_example(),
        },
    })
}

fn execute(
    config: &ExperimentConfig,
    generator: Box<dyn Generator>,
    provider: Option<&dyn EmbeddingProvider>,
    resumed: bool,
) -> Result<RunManifest, RunError> {
    config.validate()?;
    let bundle = DatasetBundle::load(&config.bundle_path)?;
    check_dataset(config, &bundle)?;
    let templates = load_templates(config)?;

    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(io_err(out))?;
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = RunManifest {
        status: RunStatus::Running,
        config: config.clone(),
        dataset: bundle.schema().dataset_name.clone(),
        dataset_counts: bundle.counts().iter().map(|(s, n)| (s.to_string(), *n)).collect(),
        label_count: bundle.schema().len(),
        generator: generator.describe(),
        decoding: config.decoding.clone(),
        store_fingerprint: None,
        started_at: now(),
        finished_at: None,
        resumed,
        cache_hits: 0,
        cache_misses: 0,
        requests_issued: 0,
        unparseable_count: 0,
        predictions_sha256: None,
        metrics: Vec::new(),
        error: None,
    };
    manifest.save(&manifest_path)?;

    let result = run_body(config, &bundle, &templates, generator, provider, &mut manifest);
    manifest.finished_at = Some(now());
    match result {
        Ok(()) => {
            manifest.status = RunStatus::Completed;
            manifest.save(&manifest_path)?;
            write_run_report(&manifest, out)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            if let Err(save_err) = manifest.save(&manifest_path) {
                warn!("could not record failure in {}: {save_err}", manifest_path.display());
            }
            Err(e)
        }
    }
}

fn run_body(
    config: &ExperimentConfig,
    bundle: &DatasetBundle,
    templates: &TemplateSet,
    generator: Box<dyn Generator>,
    provider: Option<&dyn EmbeddingProvider>,
    manifest: &mut RunManifest,
) -> Result<(), RunError> {
    let schema = bundle.schema();
    let test = bundle.test();
    let out = config.output_dir.as_path();
    let policy = RetryPolicy::attempts(config.retry_attempts);

    // Every retrieval, and the leakage check over it, completes before the
    // first generation request.
    let examples = if config.method.uses_retrieval() {
        let provider =
            provider.ok_or_else(|| RunError::Config("retrieval method without an embedding provider".into()))?;
        let store_path = config.store_path.as_ref().expect("validated");
        let store = EmbeddingStore::load(store_path)?;
        store.check_fingerprint(&provider.fingerprint())?;
        manifest.store_fingerprint = Some(store.fingerprint().to_string());
        Some(retrieve_examples(config, bundle, &store, provider, &policy)?)
    } else {
        None
    };

    let prompts = test
        .iter()
        .enumerate()
        .map(|(i, inst)| match &examples {
            None => render_simple_query(inst, schema, &templates.query),
            Some(all) => {
                let pairs: Vec<_> = all[i].iter().map(|e| (*e, e.gold_label.as_str())).collect();
                render_augmented_query_k(inst, &pairs, schema, templates)
            }
        })
        .map(|r| r.map(|p| p.prompt_text))
        .collect::<Result<Vec<_>, _>>()?;
    let requests: Vec<GenerationRequest> = prompts
        .iter()
        .map(|p| GenerationRequest::new(&config.generation_model_id, p.as_str(), &config.decoding))
        .collect();
    check_key_collisions(&requests)?;

    let cache = ResponseCache::open(&config.cache_path)?;
    let cached: Vec<bool> = requests.iter().map(|r| cache.contains(r.key())).collect();
    manifest.cache_hits = cached.iter().filter(|c| **c).count() as u64;
    manifest.cache_misses = test.len() as u64 - manifest.cache_hits;

    let mut seen = HashSet::new();
    let mut pending: Vec<usize> =
        (0..requests.len()).filter(|&i| !cached[i] && seen.insert(requests[i].key())).collect();
    pending.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    info!(
        "{} test instances: {} cached, {} distinct requests to issue",
        test.len(),
        manifest.cache_hits,
        pending.len()
    );

    let mut client = Client::new(generator).with_retry(policy).with_max_in_flight(config.parallelism).with_cache(cache);
    if let Some(rate) = config.requests_per_second {
        client = client.with_rate_limit(rate);
    }
    let (done, failure) = parallel_map(requests.len(), &pending, config.parallelism, |i| client.generate(&requests[i]));
    manifest.requests_issued = done.iter().filter(|d| d.is_some()).count() as u64;

    let cache = client.cache().expect("client has a cache");
    let matcher = LabelMatcher::new(schema, config.normalization);
    let predictions: Vec<PredictionRecord> = test
        .iter()
        .zip(&requests)
        .zip(&prompts)
        .filter_map(|((inst, req), prompt)| {
            let hit = cache.get(req.key())?;
            let normalized = matcher.normalize(&hit.raw_text);
            let mut record = PredictionRecord::new(&inst.id, sha256_hex(prompt), hit.raw_text, normalized);
            record.gold_label = Some(inst.gold_label.clone());
            Some(record)
        })
        .collect();

    if let Some(source) = failure {
        write_predictions(out.join(PARTIAL_PREDICTIONS_FILE), &predictions)?;
        return Err(RunError::Generation { completed: predictions.len(), total: test.len(), source });
    }
    assert_eq!(predictions.len(), test.len(), "every request answered or failed");

    let predictions_path = out.join(PREDICTIONS_FILE);
    write_predictions(&predictions_path, &predictions)?;
    let bytes = fs::read(&predictions_path).map_err(io_err(&predictions_path))?;
    manifest.predictions_sha256 = Some(hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes)));
    let partial = out.join(PARTIAL_PREDICTIONS_FILE);
    if partial.exists() {
        fs::remove_file(&partial).map_err(io_err(&partial))?;
    }

    let golds: HashMap<String, String> = test.iter().map(|i| (i.id.clone(), i.gold_label.clone())).collect();
    manifest.metrics = [ScoringMode::PositiveClass, ScoringMode::AllClass]
        .into_iter()
        .map(|mode| score(&predictions, &golds, schema, mode))
        .collect::<Result<_, _>>()?;
    manifest.unparseable_count = manifest.metrics[0].unparseable_count;
    Ok(())
}

/// Retrieves `k` training neighbours for every test instance and rejects the
/// run if any neighbour is a test instance.
fn retrieve_examples<'b>(
    config: &ExperimentConfig,
    bundle: &'b DatasetBundle,
    store: &EmbeddingStore,
    provider: &dyn EmbeddingProvider,
    policy: &RetryPolicy,
) -> Result<Vec<Vec<&'b RelationInstance>>, RunError> {
    let test = bundle.test();
    let order: Vec<usize> = (0..test.len()).collect();
    let (results, failure) = parallel_map(test.len(), &order, config.parallelism, |i| {
        let query = &test[i];
        let vector = embed_text(provider, &query.sentence(), policy)?;
        store.query_top_k(&query.id, &vector, config.k)
    });
    if let Some(e) = failure {
        return Err(e.into());
    }
    let results: Vec<Vec<RetrievalResult>> = results.into_iter().map(|r| r.expect("no failure")).collect();

    let test_ids: HashSet<&str> = test.iter().map(|i| i.id.as_str()).collect();
    let train: HashMap<&str, &RelationInstance> = bundle.train().iter().map(|i| (i.id.as_str(), i)).collect();
    let mut examples = Vec::with_capacity(results.len());
    for neighbours in &results {
        let mut chosen = Vec::with_capacity(neighbours.len());
        for r in neighbours {
            if test_ids.contains(r.neighbor_id.as_str()) {
                return Err(RunError::Leakage { query_id: r.query_id.clone(), neighbor_id: r.neighbor_id.clone() });
            }
            chosen.push(
                *train.get(r.neighbor_id.as_str()).ok_or_else(|| RunError::UnknownNeighbor(r.neighbor_id.clone()))?,
            );
        }
        examples.push(chosen);
    }

    let path = config.output_dir.join(RETRIEVALS_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for r in results.iter().flatten() {
        serde_json::to_writer(&mut w, r).expect("retrieval serializes");
        w.write_all(b"\n").map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(examples)
}

fn check_key_collisions(requests: &[GenerationRequest]) -> Result<(), RunError> {
    let mut by_key: HashMap<&str, &GenerationRequest> = HashMap::with_capacity(requests.len());
    for r in requests {
        if let Some(prev) = by_key.insert(r.key(), r) {
            if prev != r {
                return Err(RunError::KeyCollision { key: r.key().to_string() });
            }
        }
    }
    Ok(())
}

/// Runs `task` for each index in `order` on up to `workers` threads and
/// collects results by index. After the first failure no new work starts;
/// tasks already running finish and their results are kept.
fn parallel_map<T: Send, E: Send>(
    total: usize,
    order: &[usize],
    workers: usize,
    task: impl Fn(usize) -> Result<T, E> + Sync,
) -> (Vec<Option<T>>, Option<E>) {
    let slots: Vec<Mutex<Option<T>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<E>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, order.len().max(1)) {
            s.spawn(|| {
                while !stop.load(Ordering::SeqCst) {
                    let Some(&i) = order.get(next.fetch_add(1, Ordering::SeqCst)) else {
                        break;
                    };
                    match task(i) {
                        Ok(v) => *slots[i].lock().expect("slot poisoned") = Some(v),
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            failure.lock().expect("failure slot poisoned").get_or_insert(e);
                        }
                    }
                }
            });
        }
    });
    (
        slots.into_iter().map(|m| m.into_inner().expect("slot poisoned")).collect(),
        failure.into_inner().expect("failure slot poisoned"),
    )
}

pub fn write_predictions(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<(), RunError> {
    let path = path.as_ref();
    let tmp = path.with_extension("jsonl.tmp");
    let file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("prediction serializes");
        w.write_all(b"\n").map_err(io_err(&tmp))?;
    }
    w.flush().map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Reads a predictions file, optionally checking every record against a
/// schema.
pub fn read_predictions(
    path: impl AsRef<Path>,
    schema: Option<&RelationSchema>,
) -> Result<Vec<PredictionRecord>, RunError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| RunError::Malformed { path: path.to_path_buf(), message };
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| malformed(format!("line {}: {e}", i + 1)))?;
        if let Some(schema) = schema {
            record.validate(schema).map_err(|e| malformed(format!("line {}: {e}", i + 1)))?;
        }
        out.push(record);
    }
    Ok(out)
}
