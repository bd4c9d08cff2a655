use std::path::Path;
use std::process::{Command, Output};

use clinic_prm::cli::CandidateRecord;
use clinic_prm::eval::EvalCase;
use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinic-prm"))
        .arg("--run-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_record(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not a JSON record ({e}): {text}"))
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();

    let out = run(dir.path(), &["gen-toy"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"], "usage");

    let out = run(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));

    let out = run(dir.path(), &["build-data", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2), "missing cases file is a data error");
    assert_eq!(error_record(&out)["error"], "data");

    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 4\ntoy_cases = 3\neval_cases = 0\npool_source = \"http\"\n[generator]\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nretries = 0\ntimeout_secs = 2\n").unwrap();
    let conf = cfg.to_str().unwrap();
    ok(dir.path(), &["--config", conf, "gen-toy"]);
    let out = run(dir.path(), &["--config", conf, "build-data"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_record(&out)["error"], "backend");

    assert!(run(dir.path(), &["--help"]).status.success());
}

#[test]
fn toy_pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = ok(d, &["--seed", "3", "gen-toy", "--cases", "12", "--eval-cases", "4", "--negatives", "3"]);
    assert!(gen.contains("12 toy cases"), "{gen}");
    ok(d, &["--seed", "3", "build-data", "--pools", "local"]);
    assert!(d.join("dataset_summary.json").is_file());
    ok(d, &["build-corpus", "--mask", "notes_only"]);
    let trained = ok(d, &["train", "--steps", "3", "--batch-size", "2"]);
    assert!(trained.contains("3 steps"), "{trained}");
    assert_eq!(std::fs::read_to_string(d.join("loss.csv")).unwrap().lines().count(), 4);

    let eval = ok(d, &["eval", "--strategy", "product"]);
    assert!(eval.contains("accuracy"), "{eval}");
    let report: Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["outcomes"].as_array().unwrap().len(), 4);

    ok(d, &["sweep", "--scorer", "oracle"]);
    let sweep: Value = serde_json::from_str(&std::fs::read_to_string(d.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(sweep["reports"][0]["accuracy"], 1.0, "oracle product accuracy");
    assert_eq!(sweep["reports"].as_array().unwrap().len(), 9);

    // Score and temperature histogram over candidates taken from the eval set.
    let set: Vec<EvalCase> = clinic_prm::corruption::read_jsonl(&std::fs::read_to_string(d.join("evalset.jsonl")).unwrap()).unwrap();
    let temps = [0.2, 1.0, 1.5, 2.0];
    let records: Vec<CandidateRecord> = set
        .iter()
        .flat_map(|c| {
            c.candidates.iter().zip(temps).map(|(n, t)| CandidateRecord {
                case_id: c.case_id.clone(),
                dialogue: c.dialogue.clone(),
                note: clinic_prm::cli::NoteInput::Structured(n.clone()),
                temperature: Some(t),
            })
        })
        .collect();
    let cands = d.join("candidates.jsonl");
    std::fs::write(&cands, clinic_prm::corruption::write_jsonl(&records).unwrap()).unwrap();
    ok(d, &["score", cands.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(d.join("scores.jsonl")).unwrap().lines().count(), records.len());
    let hist = ok(d, &["temp-hist", cands.to_str().unwrap(), "--top-k", "1", "--scorer", "oracle"]);
    assert!(hist.contains("top-1"), "{hist}");

    let (a, b) = (d.join("a.txt"), d.join("b.txt"));
    std::fs::write(&a, "Order MRI of the left knee.").unwrap();
    std::fs::write(&b, "Order MRI of the left knee.").unwrap();
    let rouge = ok(d, &["rouge", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(rouge.contains("rougeL 1.0000"), "{rouge}");

    let out = run(d, &["report-study", "missing"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(d.join("resolved_config.json").is_file());
}
