//! One function per parser entry point. Each must accept arbitrary bytes
//! without panicking; the assertions are the properties checked on top.

use sfs_core::generators::openai::parse_chat_response;
use sfs_core::generators::prompts::{
    direction_log_probs, parse_assert_lines, parse_code, parse_directions, parse_insight,
};
use sfs_core::generators::synthetic::{synth_decode, synth_encode, Move};
use sfs_core::harness::dataset::{apply_given_tests, parse_jsonl, SyntheticConfig};
use sfs_core::harness::GivenTests;
use sfs_core::metrics::embedding::parse_embedding_response;
use sfs_core::verifier::sandbox::parse_runner_response;
use sfs_core::{RunRecord, ValidationTest};

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

/// Leading byte picks a count, the rest is the payload.
fn split(data: &[u8]) -> Option<(usize, &str)> {
    let (&n, rest) = data.split_first()?;
    Some((usize::from(n % 16), text(rest)?))
}

pub fn dataset_jsonl(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(tasks) = parse_jsonl(s) {
        for mut t in tasks {
            assert!(!t.id.trim().is_empty());
            assert_eq!(t.hidden_tests.len(), 1);
            apply_given_tests(&mut t, GivenTests::All);
            for v in &t.validation_tests {
                assert!(ValidationTest::new(&v.assertion_source).is_ok());
            }
        }
    }
}

pub fn synthetic_config(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(cfg) = SyntheticConfig::from_json(s) {
        if cfg.tasks <= 4 && cfg.clusters.saturating_mul(cfg.points_per_cluster) <= 256 {
            if let Ok(tasks) = cfg.materialize() {
                assert_eq!(tasks.len(), cfg.tasks);
            }
        }
    }
}

pub fn run_record(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(r) = RunRecord::from_json(s) {
        let again = RunRecord::from_json(&r.to_json()).expect("serialized record parses");
        assert_eq!(again.to_json(), r.to_json());
    }
}

pub fn runner_response(data: &[u8]) {
    let Some((n, line)) = split(data) else { return };
    if let Ok(r) = parse_runner_response(line, n) {
        assert_eq!(r.verdicts.len(), n);
        assert!(r.wall_s >= 0.0);
    }
}

pub fn code_block(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let code = parse_code(s);
    assert!(code.len() <= s.len());
}

pub fn directions(data: &[u8]) {
    let Some(s) = text(data) else { return };
    let ds = parse_directions(s);
    assert!(ds.iter().all(|d| !d.is_empty()));
    let _ = parse_insight(s);
    let tokens: Vec<(String, f64)> = s.chars().map(|c| (c.to_string(), -0.5)).collect();
    let sums = direction_log_probs(s, &tokens).expect("tokens reassemble the text");
    assert_eq!(sums.len(), ds.len());
}

pub fn assert_lines(data: &[u8]) {
    let Some(s) = text(data) else { return };
    for l in parse_assert_lines(s) {
        assert!(l.starts_with("assert"));
        assert!(!l.contains('\n'));
    }
}

pub fn synth_text(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(p) = synth_decode(s) {
        assert_eq!(synth_decode(&synth_encode(p)).unwrap(), p);
    }
    if let Some(m) = Move::parse(s) {
        assert_eq!(Move::parse(&m.label()), Some(m));
    }
}

pub fn chat_response(data: &[u8]) {
    let Some(s) = text(data) else { return };
    if let Ok(c) = parse_chat_response(s) {
        assert!(!c.text.trim().is_empty());
    }
}

pub fn embedding_response(data: &[u8]) {
    let Some((n, body)) = split(data) else { return };
    if let Ok(v) = parse_embedding_response(body, n) {
        assert_eq!(v.len(), n);
        assert!(v.iter().flatten().all(|x| x.is_finite()));
    }
}

/// Target name to check, for corpus replay.
pub type Check = fn(&[u8]);

pub const TARGETS: &[(&str, Check)] = &[
    ("dataset_jsonl", dataset_jsonl),
    ("synthetic_config", synthetic_config),
    ("run_record", run_record),
    ("runner_response", runner_response),
    ("code_block", code_block),
    ("directions", directions),
    ("assert_lines", assert_lines),
    ("synth_text", synth_text),
    ("chat_response", chat_response),
    ("embedding_response", embedding_response),
];
