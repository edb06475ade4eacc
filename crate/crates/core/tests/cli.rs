mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture_dir;
use sare_core::evaluate::EvalReport;
use sare_core::KnowledgeBase;

fn sare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sare"))
        .args(args)
        .env_remove("RUST_LOG")
        .env_remove("SARE_BACKEND_URL")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn build_kb(fixture: &Path, out: &Path) -> Output {
    let rules = format!("mock:{}", p(&fixture.join("mock_rules.json")));
    sare(&[
        "--backend",
        &rules,
        "build-kb",
        "--support",
        p(&fixture.join("support.jsonl")),
        "--embeddings",
        p(&fixture.join("embeddings.jsonl")),
        "--categories",
        p(&fixture.join("categories.json")),
        "--out",
        p(out),
        "--kshot",
        "3",
    ])
}

fn evaluate(fixture: &Path, kb: &Path, report: &Path) -> Output {
    let rules = format!("mock:{}", p(&fixture.join("mock_rules.json")));
    sare(&[
        "--backend",
        &rules,
        "evaluate",
        "--kb",
        p(kb),
        "--test",
        p(&fixture.join("test.jsonl")),
        "--embeddings",
        p(&fixture.join("embeddings.jsonl")),
        "--report",
        p(report),
    ])
}

#[test]
fn build_then_evaluate_is_deterministic() {
    let fixture = fixture_dir("0.6");
    let tmp = tempfile::tempdir().unwrap();
    let kb = tmp.path().join("kb");
    let out = build_kb(&fixture, &kb);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    KnowledgeBase::load(&kb).unwrap();

    let r1 = tmp.path().join("r1.json");
    let r2 = tmp.path().join("r2.json");
    for r in [&r1, &r2] {
        let out = evaluate(&fixture, &kb, r);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a: EvalReport = serde_json::from_str(&std::fs::read_to_string(&r1).unwrap()).unwrap();
    let b: EvalReport = serde_json::from_str(&std::fs::read_to_string(&r2).unwrap()).unwrap();
    assert_eq!(a.stable_json(), b.stable_json());
    assert_eq!(a.samples, 200);
    assert_eq!(
        std::fs::read(tmp.path().join("r1.routes.csv")).unwrap(),
        std::fs::read(tmp.path().join("r2.routes.csv")).unwrap()
    );
}

#[test]
fn classify_prints_prediction() {
    let fixture = fixture_dir("0.0");
    let tmp = tempfile::tempdir().unwrap();
    let kb = tmp.path().join("kb");
    assert!(build_kb(&fixture, &kb).status.success());
    let out = sare(&[
        "--backend",
        "none",
        "classify",
        "--kb",
        p(&kb),
        "--sample",
        "t-c03-1",
        "--embeddings",
        p(&fixture.join("embeddings.jsonl")),
        "--manifest",
        p(&fixture.join("test.jsonl")),
    ]);
    assert!(out.status.success());
    let pred: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(pred["sample_id"], "t-c03-1");
    assert_eq!(pred["label"], "c03");
    assert_eq!(pred["route"], "system1");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sare(&["evaluate", "--kb", "x"]).status.code(), Some(1));
    assert_eq!(sare(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sare(&["--backend", "grpc:x", "synth", "--out", "x"]).status.code(), Some(1));
    assert_eq!(sare(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = fixture_dir("0.0");
    let out = evaluate(&fixture, &tmp.path().join("missing"), &tmp.path().join("r.json"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("prototypes.json"));

    let bad = tmp.path().join("cats.json");
    std::fs::write(&bad, "[{\"category_id\": 5}]").unwrap();
    let rules = format!("mock:{}", p(&fixture.join("mock_rules.json")));
    let out = sare(&[
        "--backend", &rules, "build-kb",
        "--support", p(&fixture.join("support.jsonl")),
        "--embeddings", p(&fixture.join("embeddings.jsonl")),
        "--categories", p(&bad),
        "--out", p(&tmp.path().join("kb")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cats.json:1"));
}

#[test]
fn overlapping_support_and_test_is_refused() {
    let fixture = fixture_dir("0.0");
    let tmp = tempfile::tempdir().unwrap();
    let kb = tmp.path().join("kb");
    let rules = format!("mock:{}", p(&fixture.join("mock_rules.json")));
    let out = sare(&[
        "--backend", &rules, "build-kb",
        "--support", p(&fixture.join("support.jsonl")),
        "--embeddings", p(&fixture.join("embeddings.jsonl")),
        "--categories", p(&fixture.join("categories.json")),
        "--out", p(&kb),
        "--test", p(&fixture.join("support.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!kb.exists());
}

#[test]
fn backend_errors_exit_3_and_write_nothing() {
    let fixture = fixture_dir("0.0");
    let tmp = tempfile::tempdir().unwrap();
    let kb = tmp.path().join("kb");
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let backend = format!("http:http://{closed}/generate");
    let out = sare(&[
        "--backend", &backend, "build-kb",
        "--support", p(&fixture.join("support.jsonl")),
        "--embeddings", p(&fixture.join("embeddings.jsonl")),
        "--categories", p(&fixture.join("categories.json")),
        "--out", p(&kb),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!kb.exists());
}

#[test]
fn synth_and_describe() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = sare(&["synth", "--out", p(&data), "--categories", "4", "--test-per-category", "2", "--seed", "3"]);
    assert!(out.status.success());
    let again = tmp.path().join("again");
    sare(&["synth", "--out", p(&again), "--categories", "4", "--test-per-category", "2", "--seed", "3"]);
    assert_eq!(
        std::fs::read(data.join("embeddings.jsonl")).unwrap(),
        std::fs::read(again.join("embeddings.jsonl")).unwrap()
    );

    let rules = format!("mock:{}", p(&data.join("mock_rules.json")));
    let cats = tmp.path().join("cats.json");
    let texts = tmp.path().join("texts.jsonl");
    let out = sare(&[
        "--backend", &rules, "describe",
        "--categories", p(&data.join("categories.json")),
        "--support", p(&data.join("support.jsonl")),
        "--out", p(&cats),
        "--texts", p(&texts),
        "--overwrite",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&texts).unwrap();
    assert_eq!(lines.lines().count(), 4);
    assert!(lines.lines().next().unwrap().contains("\"id\":\"desc:c01\""));
    assert!(lines.contains(sare_core::synthetic::MOCK_DESCRIPTION));
}
