use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn dilemma(ws: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dilemma"))
        .arg("--workspace")
        .arg(ws)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(ws: &Path, args: &[&str]) {
    let o = dilemma(ws, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn outputs(dir: &Path) -> Value {
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    m["outputs"].clone()
}

fn gen_small(ws: &Path, out: &str) {
    ok(ws, &["generate", "--subset", "quantity", "--seed", "3", "--dilemmas", "trolley", "--samples-per-config", "1", "--out", out]);
}

#[test]
fn generate_counts_and_digests() {
    let ws = tempfile::tempdir().unwrap();
    ok(ws.path(), &["generate", "--subset", "interaction", "--seed", "7", "--out", "a"]);
    ok(ws.path(), &["generate", "--subset", "interaction", "--seed", "7", "--out", "b"]);
    let lines = fs::read_to_string(ws.path().join("a/samples.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 10_240);
    assert_eq!(outputs(&ws.path().join("a")), outputs(&ws.path().join("b")));
    let summary = fs::read_to_string(ws.path().join("a/summary.csv")).unwrap();
    assert_eq!(summary, "dilemma,subset,configs,samples\ntrolley,interaction,2048,10240\n");
}

#[test]
fn usage_errors_exit_3() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    assert_eq!(code(&dilemma(p, &["generate", "--subset", "bogus", "--out", "x"])), 3);
    assert_eq!(code(&dilemma(p, &["generate", "--out", "x"])), 3);
    assert_eq!(code(&dilemma(p, &["render", "--samples", "missing", "--out", "r"])), 3);
    assert_eq!(code(&dilemma(p, &["report", "--analysis", "missing", "--out", "r"])), 3);
    fs::create_dir(p.join("empty")).unwrap();
    assert_eq!(code(&dilemma(p, &["report", "--analysis", "empty", "--out", "r"])), 3);
    fs::write(p.join("bad.json"), r#"{"colour": 1}"#).unwrap();
    assert_eq!(code(&dilemma(p, &["--config", "bad.json", "generate", "--subset", "quantity", "--out", "x"])), 3);
    gen_small(p, "g");
    assert_eq!(code(&dilemma(p, &["evaluate", "--samples", "g", "--out", "e", "--client", "nope"])), 3);
    assert_eq!(code(&dilemma(p, &["evaluate", "--samples", "g", "--out", "e", "--client", "http"])), 3);
    assert_eq!(code(&dilemma(p, &["evaluate", "--samples", "g", "--out", "e", "--client", "synthetic:x"])), 3);
    assert_eq!(code(&dilemma(p, &["--help"])), 0);
}

#[test]
fn tampered_input_is_rejected() {
    let ws = tempfile::tempdir().unwrap();
    gen_small(ws.path(), "g");
    let f = ws.path().join("g/samples.jsonl");
    let mut text = fs::read_to_string(&f).unwrap();
    text.push('\n');
    fs::write(&f, text).unwrap();
    assert_eq!(code(&dilemma(ws.path(), &["render", "--samples", "g", "--out", "r"])), 3);
}

#[test]
fn render_is_byte_stable_and_reports_failures() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    gen_small(p, "g");
    ok(p, &["render", "--samples", "g", "--out", "r1"]);
    ok(p, &["render", "--samples", "g", "--out", "r2"]);
    let a = outputs(&p.join("r1"));
    assert_eq!(a, outputs(&p.join("r2")));
    assert!(a.as_array().unwrap().iter().any(|d| d["path"].as_str().unwrap().ends_with(".png")));

    // one sample with far more characters than the scene has room for
    let text = fs::read_to_string(p.join("g/samples.jsonl")).unwrap();
    let mut lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let one = lines[0]["group_a"][0].clone();
    lines[0]["group_a"] = Value::Array(vec![one; 600]);
    let uid = lines[0]["uid"].as_str().unwrap().to_string();
    fs::create_dir(p.join("crowd")).unwrap();
    let body: String = lines.iter().map(|v| v.to_string() + "\n").collect();
    fs::write(p.join("crowd/samples.jsonl"), body).unwrap();
    let o = dilemma(p, &["render", "--samples", "crowd", "--out", "rc"]);
    assert_eq!(code(&o), 2);
    let failures = fs::read_to_string(p.join("rc/failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 2);
    assert!(failures.contains(&uid));
}

#[test]
fn evaluate_modes_resume_and_missing_images() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    gen_small(p, "g");
    assert_eq!(code(&dilemma(p, &["evaluate", "--samples", "g", "--out", "e0", "--client", "synthetic:distracted", "--modes", "image"])), 3);
    ok(p, &["render", "--samples", "g", "--out", "r"]);
    let args = ["evaluate", "--samples", "r", "--out", "e", "--client", "synthetic:distracted", "--modes", "text,image"];
    ok(p, &args);
    let log = fs::read_to_string(p.join("e/log.jsonl")).unwrap();
    assert!(log.contains(r#""mode":"text""#) && log.contains(r#""mode":"image""#));
    assert_eq!(log.lines().count(), 112);
    let half: String = log.lines().take(40).map(|l| format!("{l}\n")).collect();
    fs::write(p.join("e/log.jsonl"), half).unwrap();
    ok(p, &args);
    assert_eq!(fs::read_to_string(p.join("e/log.jsonl")).unwrap(), log);
    let gate = fs::read_to_string(p.join("e/gate.csv")).unwrap();
    assert!(gate.starts_with("model,subset,n,mean_similarity,passes\n"));
}

#[test]
fn configured_agent() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    gen_small(p, "g");
    fs::write(p.join("cfg.json"), r#"{"agents": {"yes": {"alpha": 30.0}}}"#).unwrap();
    ok(p, &["--config", "cfg.json", "evaluate", "--samples", "g", "--out", "e", "--client", "synthetic:yes"]);
    let log = fs::read_to_string(p.join("e/log.jsonl")).unwrap();
    assert!(log.lines().all(|l| l.contains(r#""decision":"act""#)));
}

#[test]
fn analyze_selected_diagnostics_and_report() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    gen_small(p, "g");
    ok(p, &["evaluate", "--samples", "g", "--out", "e", "--client", "synthetic:utilitarian"]);
    ok(p, &["analyze", "--log", "e/log.jsonl", "--samples", "g", "--out", "a", "--diagnostics", "quantity"]);
    assert!(p.join("a/curves.csv").is_file() && p.join("a/sensitivity.csv").is_file());
    assert!(!p.join("a/firth.csv").exists());

    ok(p, &["report", "--analysis", "a", "--out", "rep1"]);
    ok(p, &["report", "--analysis", "a", "--out", "rep2"]);
    for f in ["curves.svg", "radar.svg", "log_odds.svg", "preferences.svg", "composition.svg", "intensity.svg", "index.md"] {
        assert_eq!(fs::read(p.join("rep1").join(f)).unwrap(), fs::read(p.join("rep2").join(f)).unwrap(), "{f}");
    }
    let radar = fs::read_to_string(p.join("rep1/radar.svg")).unwrap();
    assert_eq!(radar.matches(r#"class="axis""#).count(), 5);
    for d in ["Care", "Fairness", "Loyalty", "Authority", "Purity"] {
        assert!(radar.contains(&format!(">{d}</text>")));
    }

    ok(p, &["generate", "--subset", "interaction", "--seed", "2", "--samples-per-config", "1", "--out", "gi"]);
    ok(p, &["evaluate", "--samples", "gi", "--out", "ei", "--client", "synthetic:biased"]);
    ok(p, &["analyze", "--log", "ei/log.jsonl", "--samples", "gi", "--out", "ai", "--diagnostics", "interaction"]);
    let shares: Value = serde_json::from_str(&fs::read_to_string(p.join("ai/composition.json")).unwrap()).unwrap();
    let s = &shares[0]["shares"];
    let total = s["quantity"].as_f64().unwrap() + s["character"].as_f64().unwrap() + s["action_bias"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-12);
    let intensity = fs::read_to_string(p.join("ai/intensity.csv")).unwrap();
    assert_eq!(intensity.lines().count(), 2);
}

#[test]
fn malformed_log_exits_2_with_line() {
    let ws = tempfile::tempdir().unwrap();
    let p = ws.path();
    gen_small(p, "g");
    ok(p, &["evaluate", "--samples", "g", "--out", "e", "--client", "synthetic:utilitarian"]);
    let log = fs::read_to_string(p.join("e/log.jsonl")).unwrap();
    let mut lines: Vec<&str> = log.lines().collect();
    lines[2] = "{not json";
    fs::create_dir(p.join("broken")).unwrap();
    fs::write(p.join("broken/log.jsonl"), lines.join("\n")).unwrap();
    let o = dilemma(p, &["analyze", "--log", "broken/log.jsonl", "--samples", "g", "--out", "a"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

fn pipeline(ws: &Path) -> Vec<Value> {
    ok(ws, &["generate", "--subset", "quantity", "--seed", "5", "--dilemmas", "trolley,lifeboat", "--samples-per-config", "1", "--out", "g"]);
    ok(ws, &["render", "--samples", "g", "--out", "r"]);
    ok(ws, &["evaluate", "--samples", "r", "--out", "e", "--client", "synthetic:distracted", "--modes", "text,caption,image", "--repeats", "2"]);
    ok(ws, &["analyze", "--log", "e/log.jsonl", "--samples", "r", "--out", "a"]);
    ok(ws, &["report", "--analysis", "a", "--out", "p"]);
    ["g", "r", "e", "a", "p"].iter().map(|d| outputs(&ws.join(d))).collect()
}

#[test]
fn end_to_end_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(pipeline(a.path()), pipeline(b.path()));
}
