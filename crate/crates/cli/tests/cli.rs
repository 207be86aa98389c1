use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use owauc::gmop::{AblationTable, TrainRun};
use owauc::sensitivity::RatioSweepResult;
use owauc::{Curve, MetricReport};

fn owauc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owauc")).args(args).output().unwrap()
}

fn perfect() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/perfect.jsonl")
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn eval_on_perfect_fixture_gives_all_ones() {
    for detector in ["max-softmax", "implicit-margin", "provided"] {
        let out = owauc(&["eval", &perfect(), "--detector", detector]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        let r = MetricReport::from_json(&stdout(&out)).unwrap();
        assert!(r.values().iter().all(|&v| v == 1.0), "{detector}: {r:?}");
    }
}

#[test]
fn eval_writes_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = owauc(&["eval", &perfect(), "-o", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let r = MetricReport::from_json(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(r.openworld_auc, 1.0);
}

#[test]
fn missing_detector_scores_are_listed_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    fs::write(
        &path,
        concat!(
            "{\"c_base\":1,\"c_new\":1}\n",
            "{\"id\":\"a\",\"domain\":\"base\",\"label\":0,\"base_logits\":[1],\"new_logits\":[0]}\n",
            "{\"id\":\"b\",\"domain\":\"new\",\"label\":0,\"base_logits\":[0],\"new_logits\":[1],\"detector_score\":0.2}\n",
            "{\"id\":\"c\",\"domain\":\"new\",\"label\":0,\"base_logits\":[0],\"new_logits\":[1]}\n",
        ),
    )
    .unwrap();
    let out = owauc(&["eval", path.to_str().unwrap(), "--detector", "provided"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("line 2: sample \"a\""), "{err}");
    assert!(err.contains("line 4: sample \"c\""), "{err}");
    assert!(!err.contains("\"b\""), "{err}");
}

#[test]
fn data_errors_exit_one_with_location() {
    let out = owauc(&["eval", "/nonexistent/preds.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/preds.jsonl"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, "{\"c_base\":1,\"c_new\":1}\nnot json\n").unwrap();
    let out = owauc(&["eval", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_two() {
    let p = perfect();
    for args in [
        vec!["eval", p.as_str(), "--bogus"],
        vec!["eval", p.as_str(), "--detector", "oracle"],
        vec!["eval", p.as_str(), "--c-base", "2"],
        vec!["eval", p.as_str(), "--detector", "provided", "--softmax-space", "joint"],
        vec!["frobnicate"],
        vec!["train-toy", "--ablate", "k"],
        vec!["train-toy", "--gate", "tanh"],
    ] {
        let out = owauc(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn curve_and_sweep_reparse() {
    let out = owauc(&["curve", &perfect()]);
    assert_eq!(out.status.code(), Some(0));
    let c = Curve::read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(c.area, 1.0);

    let out = owauc(&["sweep-ratio", &perfect(), "--ratios", "2,1,0.5", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("# seed=7\n"));
    let s = RatioSweepResult::read_csv(out.stdout.as_slice()).unwrap();
    assert_eq!(s.ratios, vec![2.0, 1.0, 0.5]);
    assert_eq!(s.seed, 7);
}

#[test]
fn verify_props_prints_four_passes() {
    let out = owauc(&["verify-props"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn train_toy_trace_and_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = dir.path().join("k.csv");
    let args = [
        "train-toy",
        "--epochs",
        "10",
        "--seed",
        "3",
        "--ablate",
        "k",
        "--ablate-seeds",
        "2",
        "--ablation-out",
        table_path.to_str().unwrap(),
    ];
    let out = owauc(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let run = TrainRun::from_json(&stdout(&out)).unwrap();
    assert_eq!(run.trace.objectives.len(), 11);
    assert_eq!(run.trace.config.seed, 3);
    let table = AblationTable::read_csv(fs::read(&table_path).unwrap().as_slice()).unwrap();
    assert_eq!(table.seeds, vec![3, 4]);
    assert_eq!(table.rows.len(), 3);

    let first = fs::read(&table_path).unwrap();
    let again = owauc(&args);
    assert_eq!(again.stdout, out.stdout);
    assert_eq!(fs::read(&table_path).unwrap(), first);
}

#[test]
fn identical_argv_gives_identical_bytes() {
    for args in [
        vec!["sweep-ratio", "PERFECT", "--seeds-per-ratio", "3"],
        vec!["curve", "PERFECT"],
        vec!["verify-props", "--seeds", "3", "--instances", "10"],
    ] {
        let p = perfect();
        let args: Vec<&str> = args
            .iter()
            .map(|a| if *a == "PERFECT" { p.as_str() } else { a })
            .collect();
        assert_eq!(owauc(&args).stdout, owauc(&args).stdout, "{args:?}");
    }
}
