use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn relrag(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_relrag")).args(args).env("RUST_LOG", "warn").output().unwrap();
    assert!(
        out.status.success(),
        "relrag {args:?} failed:\n{}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

const LABELS: [&str; 3] = ["per:employee_of", "org:founded_by", "no_relation"];

fn write_split(path: &Path, prefix: &str, n: usize) {
    let records: Vec<Value> = (0..n)
        .map(|i| {
            let label = LABELS[i % 3];
            let words = match label {
                "per:employee_of" => format!("Ana{i} works at Corp{i} now"),
                "org:founded_by" => format!("Ana{i} founded Corp{i} early on"),
                _ => format!("Ana{i} saw Corp{i} ads today"),
            };
            json!({
                "id": format!("{prefix}{i:03}"),
                "token": words.split(' ').collect::<Vec<_>>(),
                "subj_start": 0, "subj_end": 0, "obj_start": 2, "obj_end": 2,
                "subj_type": "PERSON", "obj_type": "ORGANIZATION",
                "relation": label,
            })
        })
        .collect();
    std::fs::write(path, serde_json::to_string(&records).unwrap()).unwrap();
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let p = |rel: &str| dir.path().join(rel).to_str().unwrap().to_string();
    write_split(&dir.path().join("train.json"), "tr", 30);
    write_split(&dir.path().join("test.json"), "te", 12);
    write_split(&dir.path().join("dev.json"), "dv", 6);

    let ingest = relrag(&[
        "ingest",
        "--dataset",
        "toyrel",
        "--train",
        &p("train.json"),
        "--test",
        &p("test.json"),
        "--prompt",
        &p("dev.json"),
        "--out",
        &p("bundle"),
    ]);
    assert!(stdout(&ingest).contains("3 labels"), "{}", stdout(&ingest));

    relrag(&["gen-prompts", "--bundle", &p("bundle"), "--out", &p("prompts.jsonl")]);
    let prompts = std::fs::read_to_string(p("prompts.jsonl")).unwrap();
    let rows: Vec<Value> = prompts.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0]["instance_id"], "dv000");
    assert_eq!(rows[0]["completion"], "per:employee_of");
    assert!(rows[0]["prompt"].as_str().unwrap().contains("no_relation, org:founded_by, per:employee_of"));

    relrag(&[
        "build-index",
        "--bundle",
        &p("bundle"),
        "--split",
        "train",
        "--provider",
        "test",
        "--out",
        &p("store.bin"),
    ]);

    // the mock answers "works" sentences correctly and everything else with no_relation
    std::fs::write(
        p("mock.jsonl"),
        "{\"match\": \"works at\", \"completion\": \"per:employee_of\"}\n{\"default\": \"no_relation\"}\n",
    )
    .unwrap();
    std::fs::write(
        p("run.conf"),
        format!(
            "dataset_name = toyrel\nbundle_path = {}\nmethod = rag\ngeneration_endpoint = mock:{}\n\
             generation_model_id = toy\nembedding_endpoint = test\nstore_path = {}\nk = 2\noutput_dir = {}\n",
            p("bundle"),
            p("mock.jsonl"),
            p("store.bin"),
            p("run")
        ),
    )
    .unwrap();
    let run = relrag(&["run", "--config", &p("run.conf"), "--set", "model_label=Toy-1B"]);
    assert!(stdout(&run).contains("0 cached, 12 requests issued"), "{}", stdout(&run));

    let resumed = relrag(&["resume", "--manifest", &p("run/manifest.json")]);
    assert!(stdout(&resumed).contains("12 cached, 0 requests issued"), "{}", stdout(&resumed));

    let drift = Command::new(env!("CARGO_BIN_EXE_relrag"))
        .args(["resume", "--manifest", &p("run/manifest.json"), "--set", "k=3"])
        .output()
        .unwrap();
    assert!(!drift.status.success());
    assert!(String::from_utf8_lossy(&drift.stderr).contains("k: \"2\" -> \"3\""));

    // 4 of 8 positives found, none wrong: P 100, R 50
    let eval = stdout(&relrag(&[
        "eval",
        "--preds",
        &p("run/predictions.jsonl"),
        "--bundle",
        &p("bundle"),
        "--mode",
        "positive_class",
    ]));
    assert!(eval.contains("100.00") && eval.contains("50.00") && eval.contains("66.67"), "{eval}");

    relrag(&["report", "--manifests", &p("run/manifest.json"), "--out", &p("report")]);
    let csv = std::fs::read_to_string(p("report/report.csv")).unwrap();
    assert_eq!(csv, "model,method,toyrel P,toyrel R,toyrel F1\nToy-1B,rag,100.00,50.00,66.67\n");
}

#[test]
fn rejects_bad_arguments() {
    let out = Command::new(env!("CARGO_BIN_EXE_relrag")).args(["report", "--out", "x"]).output().unwrap();
    assert!(!out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_relrag"))
        .args(["eval", "--predictions", "p", "--bundle", "b", "--mode", "macro"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scoring mode"));
    let out = Command::new(env!("CARGO_BIN_EXE_relrag"))
        .args(["build-index", "--bundle", "b", "--split", "test", "--provider", "test", "--out", "s"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
