use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use relrag_core::client::RetryPolicy;
use relrag_core::dataset::{ingest_files, DatasetBundle, SourceFormat, Split};
use relrag_core::eval::{render_metrics_text, score, ScoringMode};
use relrag_core::prompting::{build_prompt_dataset, write_prompt_dataset, PromptTemplate};
use relrag_core::retrieval::{build_store_parallel, provider_from_spec};
use relrag_core::runner::{
    emit_report, read_predictions, resume, run_experiment, ExperimentConfig, RunManifest, RunStatus,
    DEFAULT_EMBEDDING_MODEL,
};

#[derive(Parser)]
#[command(name = "relrag", version, about = "Retrieval-augmented relation extraction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse benchmark files into a dataset bundle.
    Ingest {
        /// Dataset name: tacred, tacrev, re-tacred, semeval, or a custom name.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Held-out split used for fine-tuning prompts (the dev file for TACRED-family data).
        #[arg(long)]
        prompt: Option<PathBuf>,
        /// tacred-json or semeval-text; chosen from the dataset name if omitted.
        #[arg(long)]
        format: Option<SourceFormat>,
        /// Bundle directory to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export prompt/completion pairs for fine-tuning.
    GenPrompts {
        #[arg(long)]
        bundle: PathBuf,
        /// Split to export; defaults to the prompt split, or train when it is empty.
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed the training split into a store file.
    BuildIndex {
        #[arg(long)]
        bundle: PathBuf,
        /// Only the training split may be indexed.
        #[arg(long, default_value = "train", value_parser = ["train"])]
        split: String,
        /// `test` for the built-in hashing embedder, or an http(s) URL.
        #[arg(long)]
        provider: String,
        #[arg(long, default_value = DEFAULT_EMBEDDING_MODEL)]
        model: String,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long, default_value_t = 3)]
        retry_attempts: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config value (`key=value`); may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Permit rag on datasets whose prompts come from the training split.
        #[arg(long)]
        allow_train_overlap_prompting: bool,
    },
    /// Finish an interrupted run from its manifest.
    Resume {
        #[arg(long)]
        manifest: PathBuf,
        /// Current settings to check against the recorded config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Score a predictions file against a bundle's test split.
    Eval {
        #[arg(long, visible_alias = "preds")]
        predictions: PathBuf,
        #[arg(long)]
        bundle: PathBuf,
        /// positive_class or all_class; both when omitted.
        #[arg(long)]
        mode: Option<ScoringMode>,
    },
    /// Combine completed runs into report.txt and report.csv.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        manifests: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "positive_class")]
        mode: ScoringMode,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Ingest { dataset, train, test, prompt, format, out } => {
            let format = format.unwrap_or_else(|| SourceFormat::for_dataset(&dataset));
            let (bundle, mismatches) = ingest_files(&dataset, format, &train, &test, prompt.as_deref())
                .with_context(|| format!("ingesting {dataset}"))?;
            for m in &mismatches {
                warn!("{}: {m}", bundle.schema().dataset_name);
            }
            bundle.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let counts: Vec<String> = bundle.counts().iter().map(|(s, n)| format!("{s} {n}")).collect();
            println!(
                "{}: {}, {} labels -> {}",
                bundle.schema().dataset_name,
                counts.join(", "),
                bundle.schema().len(),
                out.display()
            );
        }
        Command::GenPrompts { bundle, split, template, out } => {
            let bundle = DatasetBundle::load(&bundle)?;
            let split = split.unwrap_or(if bundle.prompt().is_empty() { Split::Train } else { Split::Prompt });
            let template = match template {
                Some(p) => PromptTemplate::load(p)?,
                None => PromptTemplate::default_simple(),
            };
            let records = build_prompt_dataset(bundle.split(split), bundle.schema(), &template)?;
            if records.is_empty() {
                bail!("the {split} split is empty");
            }
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_prompt_dataset(BufWriter::new(file), &records)?;
            println!("{} prompts from the {split} split -> {}", records.len(), out.display());
        }
        Command::BuildIndex { bundle, split: _, provider, model, parallelism, retry_attempts, out } => {
            let bundle = DatasetBundle::load(&bundle)?;
            let policy = RetryPolicy::attempts(retry_attempts);
            let provider = provider_from_spec(&provider, &model, &policy)?;
            info!("embedding {} training instances with {}", bundle.train().len(), provider.fingerprint());
            let store = build_store_parallel(bundle.train(), provider.as_ref(), &policy, parallelism)?;
            store.save(&out)?;
            println!("{} vectors of dimension {} -> {}", store.len(), store.dimension(), out.display());
        }
        Command::Run { config, mut overrides, allow_train_overlap_prompting } => {
            if allow_train_overlap_prompting {
                overrides.push("allow_train_overlap_prompting=true".into());
            }
            let config = ExperimentConfig::load_with_overrides(&config, &overrides)?;
            print_run(&run_experiment(&config)?);
        }
        Command::Resume { manifest, overrides } => {
            print_run(&resume(&manifest, &overrides)?);
        }
        Command::Eval { predictions, bundle, mode } => {
            let bundle = DatasetBundle::load(&bundle)?;
            let records = read_predictions(&predictions, Some(bundle.schema()))?;
            let golds: HashMap<String, String> =
                bundle.test().iter().map(|i| (i.id.clone(), i.gold_label.clone())).collect();
            if records.len() != golds.len() {
                warn!("{} predictions for {} test instances", records.len(), golds.len());
            }
            let modes = mode.map_or(vec![ScoringMode::PositiveClass, ScoringMode::AllClass], |m| vec![m]);
            for (i, mode) in modes.into_iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", render_metrics_text(&score(&records, &golds, bundle.schema(), mode)?));
            }
        }
        Command::Report { manifests, out, mode } => {
            let loaded = manifests.iter().map(RunManifest::load).collect::<Result<Vec<_>, _>>()?;
            let (txt, csv) = emit_report(&loaded, mode, &out)?;
            print!("{}", std::fs::read_to_string(&txt)?);
            println!("-> {}, {}", txt.display(), csv.display());
        }
    }
    Ok(())
}

fn print_run(manifest: &RunManifest) {
    assert_eq!(manifest.status, RunStatus::Completed);
    println!(
        "{} {} on {}: {} cached, {} requests issued, {} unparseable",
        manifest.config.model_label(),
        manifest.config.method,
        manifest.dataset,
        manifest.cache_hits,
        manifest.requests_issued,
        manifest.unparseable_count
    );
    for m in &manifest.metrics {
        println!("  {}: P {:.2} R {:.2} F1 {:.2}", m.mode, 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1);
    }
    println!("  outputs in {}", manifest.config.output_dir.display());
}
