use std::path::{Path, PathBuf};

use sfs_core::harness::{self, report, BenchmarkConfig, DatasetFormat, GivenTests, HarnessError};
use sfs_core::verifier::{SandboxConfig, SandboxVerifier};
use sfs_core::{Method, RunRecord};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn humaneval_file_round_trip() {
    let tasks = harness::load_dataset(&fixture("demo.jsonl"), DatasetFormat::HumanevalJsonl).unwrap();
    assert_eq!(tasks.len(), 2);
    assert!(tasks
        .iter()
        .all(|t| t.landscape.is_none() && t.task.validation_tests.is_empty()));

    let mut t = tasks[0].task.clone();
    harness::dataset::apply_given_tests(&mut t, GivenTests::First(2));
    let given: Vec<&str> = t.validation_tests.iter().map(|v| v.assertion_source.as_str()).collect();
    assert_eq!(given, ["assert gcd(12, 18) == 6", "assert gcd(7, 3) == 1"]);
    harness::dataset::apply_given_tests(&mut t, GivenTests::All);
    assert_eq!(t.validation_tests.len(), 3);
}

#[test]
fn hidden_program_runs_in_a_runner() {
    let tasks = harness::load_dataset(&fixture("demo.jsonl"), DatasetFormat::HumanevalJsonl).unwrap();
    let mut v = SandboxVerifier::new(SandboxConfig {
        command: vec!["python3".into(), fixture("stub_runner.py").display().to_string()],
        ..SandboxConfig::default()
    });
    let mut rec = RunRecord::from_json(
        r#"{"schema":"sfs-run/1","task_id":"Demo/0","method":"bon","budget":2,"submitted":0,
            "generator_call_count":2,"solutions":[
            {"solution_id":0,"code":"def gcd(a, b):\n    while b:\n        a, b = b, a % b\n    return a\n",
             "parent_id":null,"direction_id":null,"iteration_index":0,"feedback":null,"reward":null},
            {"solution_id":1,"code":"def gcd(a, b):\n    return 1\n",
             "parent_id":null,"direction_id":null,"iteration_index":1,"feedback":null,"reward":null}]}"#,
    )
    .unwrap();
    let verdicts = harness::evaluate_hidden(&rec, &tasks[0].task.hidden_tests, &mut v).unwrap();
    assert_eq!(verdicts, [true, false]);
    rec.hidden_pass = Some(verdicts);
    rec.validate().unwrap();
}

#[test]
fn dataset_errors_name_the_line() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path().join("bad.jsonl");
    std::fs::write(
        &p,
        "{\"task_id\":\"a\",\"prompt\":\"\",\"entry_point\":\"f\",\"test\":\"assert f()\"}\n{\"task_id\":\"b\"}\n",
    )
    .unwrap();
    let e = harness::load_dataset(&p, DatasetFormat::HumanevalJsonl).unwrap_err();
    assert!(matches!(e, HarnessError::Dataset { line: 2, .. }), "{e}");
    assert_eq!(e.to_string(), "dataset line 2: missing field \"prompt\"");
}

#[test]
fn synthetic_run_directory() {
    let tasks = harness::load_dataset(&fixture("synthetic_small.json"), DatasetFormat::Synthetic).unwrap();
    assert_eq!(tasks.len(), 12);
    let d = tempfile::tempdir().unwrap();
    let cfg = BenchmarkConfig {
        methods: vec![Method::Sfs, Method::Line, Method::Genetic],
        workers: 3,
        ..BenchmarkConfig::default()
    };
    let s = harness::run_benchmark(&tasks, &cfg, d.path(), None).unwrap();
    assert!(s.success());
    assert_eq!((s.jobs, s.written.len()), (36, 36));
    assert!(d.path().join("records/sfs/synth%2F0.json").is_file());

    let csv = std::fs::read_to_string(d.path().join(report::COMPARISON_CSV)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(report::COMPARISON_HEADER));
    assert_eq!(lines.count(), 3);
    let curve = std::fs::read_to_string(d.path().join(report::SCALING_CSV)).unwrap();
    assert_eq!(curve.lines().count(), 1 + 3 * 10);

    let rep = s.report.unwrap();
    assert_eq!(rep.schema, sfs_core::metrics::REPORT_SCHEMA);
    for m in &rep.methods {
        assert!(m.pass_any.value >= m.pass_at_1.value);
        assert!(m.confusion_rates.is_some());
    }
}
