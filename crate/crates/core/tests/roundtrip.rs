use std::fs;

use owauc::evalset::{classify_all, load_evalset, save_evalset};
use owauc::fixtures::{random_scored_set, RandomSetConfig};
use owauc::gmop::{ablate, AblationAxis, AblationTable, TaskConfig, TrainConfig, TrainRun};
use owauc::metrics::{curve, report};
use owauc::sensitivity::{sweep, synthetic_fixture, FixtureConfig, RatioSweepResult};
use owauc::{ClassCounts, Curve, DetectorConfig, Error, MetricReport};

#[test]
fn evalset_save_load_preserves_samples_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.jsonl");
    let (set, _) = random_scored_set(3, &RandomSetConfig::default());
    save_evalset(&path, &set).unwrap();
    let back = load_evalset(&path, None).unwrap();
    assert_eq!(back, set);
    assert_eq!(back.source_line(0), Some(2));
    let config = DetectorConfig::provided();
    assert_eq!(report(&back, config).unwrap(), report(&set, config).unwrap());

    let again = load_evalset(&path, Some(ClassCounts::new(3, 3))).unwrap();
    assert_eq!(again, set);
    assert!(matches!(
        load_evalset(&path, Some(ClassCounts::new(4, 3))),
        Err(Error::ClassCountMismatch { .. })
    ));
}

#[test]
fn truncated_logits_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(
        &path,
        "{\"c_base\":2,\"c_new\":1}\n\n{\"id\":\"x\",\"domain\":\"base\",\"label\":0,\"base_logits\":[1],\"new_logits\":[0]}\n",
    )
    .unwrap();
    let err = load_evalset(&path, None).unwrap_err().to_string();
    assert!(err.starts_with("line 3:"), "{err}");
    assert!(err.contains("base_logits"), "{err}");
}

#[test]
fn report_curve_and_sweep_reparse() {
    let set = synthetic_fixture(
        &FixtureConfig {
            n_base: 200,
            n_new: 200,
            ..FixtureConfig::default()
        },
        2,
    )
    .unwrap();
    let config = DetectorConfig::default();
    let r = report(&set, config).unwrap();
    assert_eq!(MetricReport::from_json(&r.to_json().unwrap()).unwrap(), r);

    let scores = owauc::detection::score_all(&set, config).unwrap();
    let c = curve(&set, &scores, &classify_all(&set)).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let back = Curve::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.points, c.points);
    assert!((back.area - c.area).abs() < 1e-12);
    assert!((c.area - r.openworld_auc).abs() < 1e-12);

    let s = sweep(&set, &[2.0, 1.0, 0.5], 2, 9, config).unwrap();
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    assert_eq!(RatioSweepResult::read_csv(buf.as_slice()).unwrap(), s);
}

#[test]
fn training_outputs_reparse() {
    let task = TaskConfig {
        samples_per_class: 6,
        ..TaskConfig::default()
    };
    let config = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };
    let run = TrainRun::execute(task, &config).unwrap();
    assert_eq!(TrainRun::from_json(&run.to_json().unwrap()).unwrap(), run);
    assert!(run.trace.best_objective() <= run.trace.objectives[0]);

    let table = ablate(
        task,
        config,
        AblationAxis::Lambda,
        &AblationAxis::Lambda.default_grid(),
        &[1, 2],
    )
    .unwrap();
    let mut buf = Vec::new();
    table.write_csv(&mut buf).unwrap();
    assert_eq!(AblationTable::read_csv(buf.as_slice()).unwrap(), table);
    assert_eq!(table.rows.len(), 4);
}
